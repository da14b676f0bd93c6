//! Columnar binary containers and CSV tables.
//!
//! Container layout, all little-endian:
//!
//! ```text
//! magic [4]  "OMG1" (trajectory) or "OMG2" (slow amplitudes)
//! version u32
//! n_meta u32, then n_meta f64      run metadata
//! seed u64, stream u64, noise u8
//! n_cols u32, n_rows u64
//! per column: name length u16, UTF-8 name
//! per column: n_rows f64
//! ```

use std::io::{Read, Write};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::estimation::{FitResult, ScatterSet};
use crate::modes::SlowAmplitudeSeries;
use crate::noise::NoiseSettings;
use crate::sde::Trajectory;
use crate::spectrum::{Normalization, Spectrum};
use crate::units::SystemParams;

pub const TRAJECTORY_MAGIC: [u8; 4] = *b"OMG1";
pub const SLOW_SERIES_MAGIC: [u8; 4] = *b"OMG2";
const VERSION: u32 = 1;

const TRAJECTORY_COLUMNS: [&str; 7] = ["t", "a_re", "a_im", "b1_re", "b1_im", "b2_re", "b2_im"];
const SLOW_COLUMNS: [&str; 9] = ["t", "a1_re", "a1_im", "a2_re", "a2_im", "ab_re", "ab_im", "ad_re", "ad_im"];

fn params_to_array(p: &SystemParams) -> [f64; 16] {
    [
        p.omega_b1, p.omega_b2, p.gamma1, p.gamma2, p.g1, p.g2, p.kappa, p.kappa_in, p.delta1, p.delta2, p.drive_h,
        p.drive_c, p.nbar1, p.nbar2, p.beta_nl, p.theta,
    ]
}

fn params_from_slice(v: &[f64]) -> SystemParams {
    SystemParams {
        omega_b1: v[0],
        omega_b2: v[1],
        gamma1: v[2],
        gamma2: v[3],
        g1: v[4],
        g2: v[5],
        kappa: v[6],
        kappa_in: v[7],
        delta1: v[8],
        delta2: v[9],
        drive_h: v[10],
        drive_c: v[11],
        nbar1: v[12],
        nbar2: v[13],
        beta_nl: v[14],
        theta: v[15],
    }
}

struct Container {
    meta: Vec<f64>,
    noise: NoiseSettings,
    columns: Vec<(String, Vec<f64>)>,
}

fn write_container<W: Write>(w: &mut W, magic: [u8; 4], c: &Container) -> Result<()> {
    let n_rows = c.columns.first().map_or(0, |(_, v)| v.len());
    if c.columns.iter().any(|(_, v)| v.len() != n_rows) {
        return Err(Error::Format("columns differ in length".into()));
    }
    w.write_all(&magic)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(c.meta.len() as u32).to_le_bytes())?;
    for v in &c.meta {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&c.noise.seed.to_le_bytes())?;
    w.write_all(&c.noise.stream.to_le_bytes())?;
    w.write_all(&[c.noise.enabled as u8])?;
    w.write_all(&(c.columns.len() as u32).to_le_bytes())?;
    w.write_all(&(n_rows as u64).to_le_bytes())?;
    for (name, _) in &c.columns {
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
    }
    let mut buf = Vec::with_capacity(n_rows * 8);
    for (_, col) in &c.columns {
        buf.clear();
        for v in col {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_exact<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated container: {e}")))?;
    Ok(b)
}

fn read_container<R: Read>(r: &mut R, magic: [u8; 4], expected: &[&str]) -> Result<Container> {
    let m: [u8; 4] = read_exact(r)?;
    if m != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(&magic)
        )));
    }
    let version = u32::from_le_bytes(read_exact(r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let n_meta = u32::from_le_bytes(read_exact(r)?) as usize;
    if n_meta > 1024 {
        return Err(Error::Format(format!("implausible metadata length {n_meta}")));
    }
    let meta = (0..n_meta)
        .map(|_| read_exact(r).map(f64::from_le_bytes))
        .collect::<Result<Vec<_>>>()?;
    let seed = u64::from_le_bytes(read_exact(r)?);
    let stream = u64::from_le_bytes(read_exact(r)?);
    let [enabled] = read_exact::<1, _>(r)?;
    let n_cols = u32::from_le_bytes(read_exact(r)?) as usize;
    let n_rows = u64::from_le_bytes(read_exact(r)?) as usize;
    if n_cols != expected.len() {
        return Err(Error::Format(format!("expected {} columns, found {n_cols}", expected.len())));
    }
    let mut names = Vec::with_capacity(n_cols);
    for want in expected {
        let len = u16::from_le_bytes(read_exact(r)?) as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|e| Error::Format(format!("truncated column name: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("column name is not UTF-8".into()))?;
        if name != *want {
            return Err(Error::Format(format!("unexpected column {name:?}, expected {want:?}")));
        }
        names.push(name);
    }
    let mut columns = Vec::with_capacity(n_cols);
    let mut buf = vec![0u8; 8 * n_rows];
    for name in names {
        r.read_exact(&mut buf)
            .map_err(|e| Error::Format(format!("truncated column {name}: {e}")))?;
        let col = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        columns.push((name, col));
    }
    Ok(Container {
        meta,
        noise: NoiseSettings {
            seed,
            stream,
            enabled: enabled != 0,
            occupancies: [0.0; 2],
        },
        columns,
    })
}

fn split(v: &[C64]) -> (Vec<f64>, Vec<f64>) {
    (v.iter().map(|z| z.re).collect(), v.iter().map(|z| z.im).collect())
}

fn join(re: &[f64], im: &[f64]) -> Vec<C64> {
    re.iter().zip(im).map(|(r, i)| C64::new(*r, *i)).collect()
}

fn complex_columns(names: &[&str], times: &[f64], series: &[&[C64]]) -> Vec<(String, Vec<f64>)> {
    let mut cols = vec![(names[0].to_string(), times.to_vec())];
    for (k, s) in series.iter().enumerate() {
        let (re, im) = split(s);
        cols.push((names[1 + 2 * k].to_string(), re));
        cols.push((names[2 + 2 * k].to_string(), im));
    }
    cols
}

/// Write a trajectory as an "OMG1" container. Metadata holds the parameter
/// snapshot followed by the two bath occupancies.
pub fn write_trajectory<W: Write>(w: &mut W, traj: &Trajectory) -> Result<()> {
    let mut meta = params_to_array(&traj.params_snapshot).to_vec();
    meta.extend_from_slice(&traj.noise_provenance.occupancies);
    let columns = complex_columns(&TRAJECTORY_COLUMNS, &traj.times, &[&traj.a, &traj.b1, &traj.b2]);
    write_container(
        w,
        TRAJECTORY_MAGIC,
        &Container {
            meta,
            noise: traj.noise_provenance.clone(),
            columns,
        },
    )
}

pub fn read_trajectory<R: Read>(r: &mut R) -> Result<Trajectory> {
    let c = read_container(r, TRAJECTORY_MAGIC, &TRAJECTORY_COLUMNS)?;
    if c.meta.len() != 18 {
        return Err(Error::Format(format!("trajectory metadata has {} values, expected 18", c.meta.len())));
    }
    let col = |k: usize| &c.columns[k].1;
    let mut noise = c.noise.clone();
    noise.occupancies = [c.meta[16], c.meta[17]];
    Ok(Trajectory {
        times: col(0).clone(),
        a: join(col(1), col(2)),
        b1: join(col(3), col(4)),
        b2: join(col(5), col(6)),
        params_snapshot: params_from_slice(&c.meta[..16]),
        noise_provenance: noise,
    })
}

/// Write slow amplitudes as an "OMG2" container. Metadata holds the frame
/// frequency and the two static offsets.
pub fn write_slow_series<W: Write>(w: &mut W, s: &SlowAmplitudeSeries, noise: &NoiseSettings) -> Result<()> {
    let meta = vec![
        s.frame_freq,
        s.beta_offset1.re,
        s.beta_offset1.im,
        s.beta_offset2.re,
        s.beta_offset2.im,
    ];
    let columns = complex_columns(&SLOW_COLUMNS, &s.times, &[&s.a1, &s.a2, &s.ab, &s.ad]);
    write_container(
        w,
        SLOW_SERIES_MAGIC,
        &Container {
            meta,
            noise: noise.clone(),
            columns,
        },
    )
}

pub fn read_slow_series<R: Read>(r: &mut R) -> Result<SlowAmplitudeSeries> {
    let c = read_container(r, SLOW_SERIES_MAGIC, &SLOW_COLUMNS)?;
    if c.meta.len() != 5 {
        return Err(Error::Format(format!("slow-series metadata has {} values, expected 5", c.meta.len())));
    }
    let col = |k: usize| &c.columns[k].1;
    Ok(SlowAmplitudeSeries {
        times: col(0).clone(),
        a1: join(col(1), col(2)),
        a2: join(col(3), col(4)),
        ab: join(col(5), col(6)),
        ad: join(col(7), col(8)),
        beta_offset1: C64::new(c.meta[1], c.meta[2]),
        beta_offset2: C64::new(c.meta[3], c.meta[4]),
        frame_freq: c.meta[0],
    })
}

fn csv_row<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    let line: Vec<String> = values.iter().map(|v| format!("{v:e}")).collect();
    writeln!(w, "{}", line.join(","))?;
    Ok(())
}

/// Time in units of 1/ω̄_b, amplitudes in √quanta.
pub fn write_trajectory_csv<W: Write>(w: &mut W, traj: &Trajectory) -> Result<()> {
    writeln!(
        w,
        "t [1/omega_b],a_re [sqrt(quanta)],a_im [sqrt(quanta)],b1_re [sqrt(quanta)],b1_im [sqrt(quanta)],b2_re [sqrt(quanta)],b2_im [sqrt(quanta)]"
    )?;
    for k in 0..traj.len() {
        csv_row(
            w,
            &[
                traj.times[k],
                traj.a[k].re,
                traj.a[k].im,
                traj.b1[k].re,
                traj.b1[k].im,
                traj.b2[k].re,
                traj.b2[k].im,
            ],
        )?;
    }
    Ok(())
}

/// Bright and dark amplitudes with their magnitudes.
pub fn write_slow_series_csv<W: Write>(w: &mut W, s: &SlowAmplitudeSeries) -> Result<()> {
    writeln!(
        w,
        "t [1/omega_b],ab_re [sqrt(quanta)],ab_im [sqrt(quanta)],ad_re [sqrt(quanta)],ad_im [sqrt(quanta)],abs_ab [sqrt(quanta)],abs_ad [sqrt(quanta)]"
    )?;
    for k in 0..s.len() {
        let (b, d) = (s.ab[k], s.ad[k]);
        csv_row(w, &[s.times[k], b.re, b.im, d.re, d.im, b.norm(), d.norm()])?;
    }
    Ok(())
}

/// Spectrum table with the window name and normalization flag on every row.
pub fn write_spectrum_csv<W: Write>(w: &mut W, spec: &Spectrum) -> Result<()> {
    writeln!(w, "freq [omega_b],psd [quanta/omega_b],n_segments [1],window [name],normalized [0/1]")?;
    let window = spec.window().name();
    let normalized = (spec.normalization == Normalization::PeakNormalized) as u8;
    for (f, p) in spec.freqs.iter().zip(&spec.psd) {
        writeln!(w, "{f:e},{p:e},{},{window},{normalized}", spec.n_segments)?;
    }
    Ok(())
}

pub fn write_scatter_csv<W: Write>(w: &mut W, scatter: &ScatterSet) -> Result<()> {
    writeln!(
        w,
        "amp_sq [quanta],omega_peak [omega_b],sigma_omega [omega_b],power [W],seed [1],stream [1],low_confidence [0/1]"
    )?;
    for p in &scatter.points {
        writeln!(
            w,
            "{:e},{:e},{:e},{:e},{},{},{}",
            p.amp_sq, p.omega_peak, p.sigma_omega, p.power, p.seed, p.stream, p.low_confidence as u8
        )?;
    }
    Ok(())
}

pub fn write_fit_csv<W: Write>(w: &mut W, fit: &FitResult) -> Result<()> {
    writeln!(
        w,
        "slope [omega_b/quanta],intercept [omega_b],beta_nl_est [1],r2 [1],ci_low [1],ci_high [1],n_points [1]"
    )?;
    writeln!(
        w,
        "{:e},{:e},{:e},{:e},{:e},{:e},{}",
        fit.slope, fit.intercept, fit.beta_nl_est, fit.r_squared, fit.ci95.0, fit.ci95.1, fit.n_points
    )?;
    Ok(())
}

/// Write a generic numeric table; `header` names every column with its unit.
pub fn write_table_csv<W: Write>(w: &mut W, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::Format(format!("row has {} values, header {}", row.len(), header.len())));
        }
        csv_row(w, row)?;
    }
    Ok(())
}
