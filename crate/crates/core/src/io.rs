//! CSV and JSON persistence for draws, densities and estimates.
//!
//! Floats are written in Rust's shortest round-trip form, so every loader
//! reproduces the written values exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dpm::{Bands, DensityGridDraws, MixtureParams};
use crate::error::{Error, Result};
use crate::histogram::{Draw, DrawStore, HistogramEmissions, StoreMeta};
use crate::hmm::{LatentPath, TransitionMatrix};

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::invalid(format!("not a number: {s:?}")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::invalid(format!("not a non-negative integer: {s:?}")))
}

/// One observation per line, column `y`.
pub fn write_observations(path: &Path, y: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "y"])?;
    for (t, v) in y.iter().enumerate() {
        w.write_record([t.to_string(), fmt(*v)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the `y` column when present, otherwise the single numeric column
/// of a one-column file (header optional).
pub fn read_observations(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows = r.records();
    let Some(first) = rows.next() else {
        return Ok(Vec::new());
    };
    let first = first?;
    let (col, mut out) = match first.iter().position(|h| h.trim() == "y") {
        Some(c) => (c, Vec::new()),
        None if first.len() == 1 => match first[0].trim().parse::<f64>() {
            Ok(v) => (0, vec![v]),
            Err(_) => (0, Vec::new()),
        },
        None => return Err(Error::invalid("observation CSV needs a `y` column or exactly one column")),
    };
    for rec in rows {
        let rec = rec?;
        let field = rec.get(col).ok_or_else(|| Error::invalid("short row in observation CSV"))?;
        out.push(parse_f64(field)?);
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("observations must be finite"));
    }
    Ok(out)
}

pub fn write_latent_path(path: &Path, x: &LatentPath) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "x"])?;
    for (t, s) in x.0.iter().enumerate() {
        w.write_record([t.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_latent_path(path: &Path) -> Result<LatentPath> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        out.push(parse_usize(&rec?[1])?);
    }
    Ok(LatentPath(out))
}

/// JSON companion of a draw-store CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawStoreMeta {
    #[serde(rename = "R")]
    pub r: usize,
    pub kappa: Option<usize>,
    #[serde(flatten)]
    pub meta: StoreMeta,
    pub log_posteriors: Vec<f64>,
    pub relabeling: Vec<Vec<usize>>,
}

pub fn draw_store_header(r: usize, kappa: Option<usize>) -> Vec<String> {
    let mut h = vec!["iter".to_string()];
    for i in 1..=r {
        for j in 1..=r {
            h.push(format!("Q_{i}_{j}"));
        }
    }
    if let Some(k) = kappa {
        for m in 1..=k {
            for s in 1..=r {
                h.push(format!("omega_{m}_{s}"));
            }
        }
    }
    h
}

/// Columns `iter`, `Q_i_j` row-major, then `omega_m_s` bin-major (1-based
/// labels); the rest goes to `json_path`.
pub fn write_draw_store(store: &DrawStore, csv_path: &Path, json_path: &Path) -> Result<()> {
    let kappa = store.kappa();
    let mut w = csv::Writer::from_path(csv_path)?;
    w.write_record(draw_store_header(store.r, kappa))?;
    for (draw, it) in store.draws.iter().zip(&store.iterations) {
        let mut rec = vec![it.to_string()];
        rec.extend(draw.q.entries().iter().map(|v| fmt(*v)));
        if let (Some(k), Some(omega)) = (kappa, &draw.omega) {
            for m in 0..k {
                for s in 0..store.r {
                    rec.push(fmt(omega.weight(m, s)));
                }
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    let meta = DrawStoreMeta {
        r: store.r,
        kappa,
        meta: store.meta.clone(),
        log_posteriors: store.log_posteriors.clone(),
        relabeling: store.relabeling.clone(),
    };
    write_json(json_path, &meta)
}

pub fn read_draw_store(csv_path: &Path, json_path: &Path) -> Result<DrawStore> {
    let meta: DrawStoreMeta = read_json(json_path)?;
    let (r, kappa) = (meta.r, meta.kappa);
    let mut reader = csv::Reader::from_path(csv_path)?;
    let expected = draw_store_header(r, kappa);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != expected {
        return Err(Error::invalid("draw-store CSV header does not match its metadata"));
    }
    let mut draws = Vec::new();
    let mut iterations = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        iterations.push(parse_usize(&rec[0])?);
        let q: Vec<f64> = (1..=r * r).map(|c| parse_f64(&rec[c])).collect::<Result<_>>()?;
        let omega = match kappa {
            Some(k) => {
                let mut weights = vec![0.0; k * r];
                for m in 0..k {
                    for s in 0..r {
                        weights[s * k + m] = parse_f64(&rec[1 + r * r + m * r + s])?;
                    }
                }
                Some(HistogramEmissions::new(k, r, weights)?)
            }
            None => None,
        };
        draws.push(Draw { q: TransitionMatrix::new(r, q)?, omega });
    }
    if draws.len() != meta.log_posteriors.len() || draws.len() != meta.relabeling.len() {
        return Err(Error::invalid("draw-store CSV and metadata disagree on the number of draws"));
    }
    Ok(DrawStore {
        r,
        draws,
        iterations,
        log_posteriors: meta.log_posteriors,
        relabeling: meta.relabeling,
        meta: meta.meta,
    })
}

/// Long format: one row per (draw, state, component).
pub fn write_emission_draws(path: &Path, draws: &[MixtureParams]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["draw", "state", "component", "mu", "v", "W"])?;
    for (d, p) in draws.iter().enumerate() {
        for r in 0..p.r {
            for j in 0..p.s_max {
                w.write_record([
                    d.to_string(),
                    r.to_string(),
                    j.to_string(),
                    fmt(p.location(r, j)),
                    fmt(p.v[r]),
                    fmt(p.weight(r, j)),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_emission_draws(path: &Path) -> Result<Vec<MixtureParams>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows: Vec<(usize, usize, usize, f64, f64, f64)> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        rows.push((
            parse_usize(&rec[0])?,
            parse_usize(&rec[1])?,
            parse_usize(&rec[2])?,
            parse_f64(&rec[3])?,
            parse_f64(&rec[4])?,
            parse_f64(&rec[5])?,
        ));
    }
    let Some(n_draws) = rows.iter().map(|r| r.0 + 1).max() else {
        return Ok(Vec::new());
    };
    let r = rows.iter().map(|r| r.1 + 1).max().unwrap_or(1);
    let s = rows.iter().map(|r| r.2 + 1).max().unwrap_or(1);
    if rows.len() != n_draws * r * s {
        return Err(Error::invalid("emission-draw CSV is not a complete draw x state x component table"));
    }
    let mut mu = vec![vec![0.0; r * s]; n_draws];
    let mut w = vec![vec![0.0; r * s]; n_draws];
    let mut v = vec![vec![0.0; r]; n_draws];
    for (d, st, j, m, var, wt) in rows {
        mu[d][st * s + j] = m;
        w[d][st * s + j] = wt;
        v[d][st] = var;
    }
    (0..n_draws)
        .map(|d| MixtureParams::new(r, s, std::mem::take(&mut mu[d]), std::mem::take(&mut v[d]), std::mem::take(&mut w[d])))
        .collect()
}

/// Wide format: one row per (grid point, state), one column per draw.
pub fn write_density_draws(path: &Path, d: &DensityGridDraws) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["y".to_string(), "state".to_string()];
    header.extend((0..d.len()).map(|k| format!("draw_{k}")));
    w.write_record(&header)?;
    for r in 0..d.r {
        for (g, y) in d.grid.iter().enumerate() {
            let mut rec = vec![fmt(*y), r.to_string()];
            rec.extend((0..d.len()).map(|k| fmt(d.curve(k, r)[g])));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_density_draws(path: &Path) -> Result<DensityGridDraws> {
    let mut reader = csv::Reader::from_path(path)?;
    let n_draws = reader.headers()?.len().saturating_sub(2);
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let vals: Vec<f64> = rec.iter().skip(2).map(parse_f64).collect::<Result<_>>()?;
        rows.push((parse_f64(&rec[0])?, parse_usize(&rec[1])?, vals));
    }
    let r = rows.iter().map(|x| x.1 + 1).max().unwrap_or(1);
    let grid: Vec<f64> = rows.iter().filter(|x| x.1 == 0).map(|x| x.0).collect();
    let g = grid.len();
    if rows.len() != r * g {
        return Err(Error::invalid("density CSV is not a complete grid x state table"));
    }
    let mut out = DensityGridDraws::new(grid, r);
    out.values = vec![0.0; n_draws * r * g];
    for (i, (_, st, vals)) in rows.into_iter().enumerate() {
        let k = i % g;
        for (d, v) in vals.into_iter().enumerate() {
            out.values[(d * r + st) * g + k] = v;
        }
    }
    Ok(out)
}

pub fn write_bands(path: &Path, b: &Bands) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["y", "state", "mean", "lower", "upper"])?;
    for r in 0..b.mean.len() {
        for (g, y) in b.grid.iter().enumerate() {
            w.write_record([fmt(*y), r.to_string(), fmt(b.mean[r][g]), fmt(b.lower[r][g]), fmt(b.upper[r][g])])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// The band level is not stored in the CSV and must be supplied.
pub fn read_bands(path: &Path, level: f64) -> Result<Bands> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut grid = Vec::new();
    let (mut mean, mut lower, mut upper): (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) = (vec![], vec![], vec![]);
    for rec in reader.records() {
        let rec = rec?;
        let st = parse_usize(&rec[1])?;
        if st == mean.len() {
            mean.push(Vec::new());
            lower.push(Vec::new());
            upper.push(Vec::new());
        } else if st + 1 != mean.len() {
            return Err(Error::invalid("band CSV rows must be grouped by state"));
        }
        if st == 0 {
            grid.push(parse_f64(&rec[0])?);
        }
        mean[st].push(parse_f64(&rec[2])?);
        lower[st].push(parse_f64(&rec[3])?);
        upper[st].push(parse_f64(&rec[4])?);
    }
    if mean.iter().any(|m| m.len() != grid.len()) {
        return Err(Error::invalid("band CSV states have different grid lengths"));
    }
    Ok(Bands { level, grid, mean, lower, upper })
}

/// Simple named-column CSV of floats, used for summary tables.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::invalid("table row length differs from header"));
        }
        w.write_record(row.iter().map(|v| fmt(*v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        rows.push(rec?.iter().map(parse_f64).collect::<Result<Vec<_>>>()?);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::Pi1Config;
    use crate::partition::{build_partition, TransformG0};

    fn store(with_omega: bool) -> DrawStore {
        let part = build_partition(TransformG0::sigmoid_linear(), 1).unwrap();
        let q = TransitionMatrix::from_rows(&[vec![0.7, 0.3], vec![0.2 + 1e-17, 0.8]]).unwrap();
        let omega = HistogramEmissions::from_columns(&[vec![0.1, 0.9], vec![1.0 / 3.0, 2.0 / 3.0]]).unwrap();
        let n = 3;
        DrawStore {
            r: 2,
            draws: (0..n).map(|_| Draw { q: q.clone(), omega: with_omega.then(|| omega.clone()) }).collect(),
            iterations: vec![19, 39, 59],
            log_posteriors: vec![-1.5, f64::MIN_POSITIVE, -3.25],
            relabeling: vec![vec![0, 1], vec![1, 0], vec![0, 1]],
            meta: StoreMeta {
                seed: 42,
                config: Pi1Config { iterations: 60, burn_in: 0, thin: 20, seed: 42 },
                partition: with_omega.then_some(part),
                relabel_reference_index: Some(1),
            },
        }
    }

    #[test]
    fn draw_store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for with_omega in [true, false] {
            let s = store(with_omega);
            let (c, j) = (dir.path().join("d.csv"), dir.path().join("d.json"));
            write_draw_store(&s, &c, &j).unwrap();
            let back = read_draw_store(&c, &j).unwrap();
            assert_eq!(back.draws, s.draws);
            assert_eq!(back.iterations, s.iterations);
            assert_eq!(back.log_posteriors, s.log_posteriors);
            assert_eq!(back.relabeling, s.relabeling);
            assert_eq!(back.meta.seed, s.meta.seed);
            assert_eq!(back.meta.partition.map(|p| p.edges().to_vec()), s.meta.partition.map(|p| p.edges().to_vec()));
        }
        let header = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
        assert!(header.starts_with("iter,Q_1_1,Q_1_2,Q_2_1,Q_2_2\n"));
    }

    #[test]
    fn emission_and_density_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = MixtureParams::new(2, 2, vec![-1.0, 0.1, 1.0, 2.0], vec![0.9, 1.1], vec![0.25, 0.75, 0.5, 0.5]).unwrap();
        let q = p.permuted(&[1, 0]);
        let path = dir.path().join("e.csv");
        write_emission_draws(&path, &[p.clone(), q.clone()]).unwrap();
        assert_eq!(read_emission_draws(&path).unwrap(), vec![p.clone(), q.clone()]);

        let d = DensityGridDraws::from_params(crate::stats::linspace(-4.0, 4.0, 9), &[p, q]);
        let path = dir.path().join("g.csv");
        write_density_draws(&path, &d).unwrap();
        assert_eq!(read_density_draws(&path).unwrap(), d);

        let b = crate::dpm::pointwise_bands(&d, 0.9).unwrap();
        let path = dir.path().join("b.csv");
        write_bands(&path, &b).unwrap();
        assert_eq!(read_bands(&path, 0.9).unwrap(), b);
    }

    #[test]
    fn observations_accept_bare_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.csv");
        let y = vec![0.1, -2.5e-7, 3.0, std::f64::consts::PI];
        write_observations(&path, &y).unwrap();
        assert_eq!(read_observations(&path).unwrap(), y);
        std::fs::write(&path, "1.5\n-2\n3e2\n").unwrap();
        assert_eq!(read_observations(&path).unwrap(), vec![1.5, -2.0, 300.0]);
        std::fs::write(&path, "value\n1.5\n").unwrap();
        assert_eq!(read_observations(&path).unwrap(), vec![1.5]);
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(read_observations(&path).is_err());

        let x = LatentPath(vec![0, 1, 1, 0]);
        let path = dir.path().join("x.csv");
        write_latent_path(&path, &x).unwrap();
        assert_eq!(read_latent_path(&path).unwrap(), x);
    }

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let rows = vec![vec![2.0, 0.1234567890123], vec![4.0, 1e-300]];
        write_table(&path, &["kappa", "sd"], &rows).unwrap();
        assert_eq!(read_table(&path).unwrap(), (vec!["kappa".into(), "sd".into()], rows));
        assert!(write_table(&path, &["a"], &[vec![1.0, 2.0]]).is_err());
    }
}
