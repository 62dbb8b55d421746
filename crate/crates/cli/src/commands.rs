//! One function per subcommand. Each returns the artifact paths it wrote.

use std::path::{Path, PathBuf};

use cuthmm::diagnostics::{self, BvmReport, EmConfig, L1Report, MonotonicityReport};
use cuthmm::dpm::{self, Bands, DensityGridDraws, MixtureParams, NestedConfig};
use cuthmm::histogram::{self, DirichletHyper, Draw, DrawStore, HeuristicReport, HistogramEmissions, QSummary};
use cuthmm::hmm::{EmissionLaw, TransitionMatrix};
use cuthmm::io;
use cuthmm::spectral::{self, PowerConfig, SpectralConfig, SpectralEstimate};
use cuthmm::stats;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{derive_seed, EmissionSpec, Pi1Section};
use crate::error::CliError;
use crate::run::Run;

type Artifacts = Vec<PathBuf>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMetadata {
    pub n: usize,
    pub seed: u64,
    pub simulated: bool,
    pub source: Option<String>,
    #[serde(rename = "R")]
    pub r: usize,
    /// Generating parameters, present only for simulated data.
    #[serde(rename = "Q_star")]
    pub q_star: Option<Vec<Vec<f64>>>,
    pub emissions: Option<Vec<EmissionSpec>>,
}

impl DataMetadata {
    fn truth(&self) -> Option<(TransitionMatrix, Vec<EmissionLaw>)> {
        let q = TransitionMatrix::from_rows(self.q_star.as_ref()?).ok()?;
        Some((q, self.emissions.as_ref()?.iter().map(EmissionSpec::law).collect()))
    }
}

fn parallel<T: Sync, U: Send>(
    jobs: usize,
    items: &[T],
    f: impl Fn(&T) -> Result<U, CliError> + Sync + Send,
) -> Result<Vec<U>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {jobs} worker threads: {e}")))?;
    pool.install(|| items.par_iter().map(f).collect())
}

fn require(path: PathBuf, produced_by: &'static str) -> Result<PathBuf, CliError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::missing(path, produced_by))
    }
}

fn create(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(CliError::from)
}

fn load_data(run: &Run) -> Result<(Vec<f64>, DataMetadata), CliError> {
    let y = io::read_observations(&require(run.observations(), "simulate")?)?;
    let meta = io::read_json(&require(run.metadata(), "simulate")?)?;
    Ok((y, meta))
}

fn prefix(y: &[f64], n: usize) -> Result<&[f64], CliError> {
    y.get(..n)
        .ok_or_else(|| CliError::Config(format!("sample size {n} exceeds the {} available observations", y.len())))
}

fn load_store(run: &Run, n: usize, m: u32) -> Result<DrawStore, CliError> {
    let dir = run.pi1_cell(n, m);
    let csv = require(dir.join("draws.csv"), "fit-q")?;
    let json = require(dir.join("draws.json"), "fit-q")?;
    Ok(io::read_draw_store(&csv, &json)?)
}

fn select_draws(store: &DrawStore, count: Option<usize>) -> DrawStore {
    let len = store.len();
    let Some(count) = count.filter(|&c| c < len) else {
        return store.clone();
    };
    let idx: Vec<usize> = (0..count).map(|i| i * len / count).collect();
    DrawStore {
        r: store.r,
        draws: idx.iter().map(|&i| store.draws[i].clone()).collect(),
        iterations: idx.iter().map(|&i| store.iterations[i]).collect(),
        log_posteriors: idx.iter().map(|&i| store.log_posteriors[i]).collect(),
        relabeling: idx.iter().map(|&i| store.relabeling[i].clone()).collect(),
        meta: store.meta.clone(),
    }
}

fn entry_names(prefix: &str, r: usize) -> Vec<String> {
    (0..r).flat_map(|i| (0..r).map(move |j| format!("{prefix}Q_{}_{}", i + 1, j + 1))).collect()
}

fn write_table(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    Ok(io::write_table(path, &h, rows)?)
}

pub fn simulate(run: &Run) -> Result<Artifacts, CliError> {
    let cfg = &run.config;
    let dir = run.data_dir();
    create(&dir)?;
    let mut out = vec![run.observations(), run.metadata()];
    let meta = match &cfg.data.input {
        Some(input) => {
            let y = io::read_observations(&require(input.clone(), "simulate")?)?;
            if y.len() < 2 {
                return Err(CliError::Config(format!("{} holds fewer than two observations", input.display())));
            }
            io::write_observations(&run.observations(), &y)?;
            DataMetadata {
                n: y.len(),
                seed: cfg.data.seed,
                simulated: false,
                source: Some(input.display().to_string()),
                r: cfg.model.r,
                q_star: None,
                emissions: None,
            }
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.data.seed);
            let (x, y) = cuthmm::hmm::simulate_hmm(&cfg.q_star()?, &cfg.laws(), cfg.data.n, &mut rng)?;
            io::write_observations(&run.observations(), &y)?;
            let path = dir.join("latent_path.csv");
            io::write_latent_path(&path, &x)?;
            out.push(path);
            DataMetadata {
                n: cfg.data.n,
                seed: cfg.data.seed,
                simulated: true,
                source: None,
                r: cfg.model.r,
                q_star: Some(cfg.model.q_star.clone()),
                emissions: Some(cfg.model.emissions.clone()),
            }
        }
    };
    io::write_json(&run.metadata(), &meta)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pi1CellSummary {
    pub n: usize,
    #[serde(rename = "M")]
    pub m: u32,
    pub kappa: usize,
    pub seed: u64,
    pub draws: usize,
    /// 90% equal-tailed intervals.
    pub q: QSummary,
    /// Row-major posterior standard deviations of Q.
    pub q_sd: Vec<f64>,
}

fn fit_q_cell(run: &Run, y: &[f64], n: usize, m: u32) -> Result<(Artifacts, Pi1CellSummary), CliError> {
    let cfg = &run.config;
    let r = cfg.model.r;
    let part = cfg.partition.build(m)?;
    let bins = part.coarsen(prefix(y, n)?);
    let seed = derive_seed(cfg.data.seed, "pi1", n as u64, m as u64);
    let store = histogram::run_chain(&bins, &cfg.pi1.hyper(r, part.kappa()), &cfg.pi1.chain(seed), r, Some(&part))?;
    let dir = run.pi1_cell(n, m);
    create(&dir)?;
    let (csv, json, sum) = (dir.join("draws.csv"), dir.join("draws.json"), dir.join("summary.json"));
    io::write_draw_store(&store, &csv, &json)?;
    let q_sd = (0..r).flat_map(|i| (0..r).map(move |j| (i, j))).map(|(i, j)| stats::std_dev(&store.q_entry(i, j))).collect();
    let summary = Pi1CellSummary {
        n,
        m,
        kappa: part.kappa(),
        seed,
        draws: store.len(),
        q: histogram::summarize(&store, 0.1)?,
        q_sd,
    };
    io::write_json(&sum, &summary)?;
    Ok((vec![csv, json, sum], summary))
}

fn grid_cells(run: &Run) -> Vec<(usize, u32)> {
    let cfg = &run.config;
    cfg.grid.n.iter().flat_map(|&n| cfg.partition.m.iter().map(move |&m| (n, m))).collect()
}

pub fn fit_q(run: &Run) -> Result<Artifacts, CliError> {
    let (y, _) = load_data(run)?;
    let results = parallel(run.jobs, &grid_cells(run), |&(n, m)| fit_q_cell(run, &y, n, m))?;
    let r = run.config.model.r;
    let mut header: Vec<String> = ["n", "M", "kappa", "draws"].map(String::from).to_vec();
    header.extend(entry_names("mean_", r));
    header.extend(entry_names("sd_", r));
    let rows: Vec<Vec<f64>> = results
        .iter()
        .map(|(_, s)| {
            let mut row = vec![s.n as f64, s.m as f64, s.kappa as f64, s.draws as f64];
            row.extend(&s.q.mean);
            row.extend(&s.q_sd);
            row
        })
        .collect();
    let table = run.root.join("pi1").join("summary.csv");
    write_table(&table, &header, &rows)?;
    let mut out: Artifacts = results.into_iter().flat_map(|(a, _)| a).collect();
    out.push(table);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionSummary {
    pub n: usize,
    #[serde(rename = "M")]
    pub m: Option<u32>,
    #[serde(rename = "C")]
    pub c: Option<usize>,
    #[serde(rename = "S_max")]
    pub s_max: usize,
    pub draws: usize,
    pub seed: u64,
    pub band_level: f64,
    /// Against the generating densities, when the data were simulated.
    pub l1: Option<L1Report>,
    pub band_coverage: Option<Vec<f64>>,
}

fn density_grid(run: &Run) -> Option<Vec<f64>> {
    run.config.outputs.grid.map(|[lo, hi]| stats::linspace(lo, hi, run.config.outputs.grid_points))
}

fn full_bayes_grid(run: &Run, y: &[f64]) -> Vec<f64> {
    density_grid(run).unwrap_or_else(|| dpm::default_grid(y, run.config.outputs.grid_points))
}

fn truth_scores(densities: &DensityGridDraws, bands: &Bands, laws: &[EmissionLaw]) -> Result<(L1Report, Vec<f64>), CliError> {
    let grid = &densities.grid;
    let truth: Vec<Vec<f64>> = laws.iter().map(|l| grid.iter().map(|&g| l.pdf(g)).collect()).collect();
    let l1 = diagnostics::l1_density_error(grid, &densities.mean_curves(), &truth)?;
    let mut aligned = truth.clone();
    for (s, &e) in l1.permutation.iter().enumerate() {
        aligned[e] = truth[s].clone();
    }
    let lo = grid.first().copied().unwrap_or(0.0);
    let hi = grid.last().copied().unwrap_or(0.0);
    Ok((l1, bands.coverage(&aligned, lo, hi)))
}

fn write_emission_outputs(
    run: &Run,
    dir: &Path,
    draws: &[MixtureParams],
    densities: &DensityGridDraws,
    laws: Option<&[EmissionLaw]>,
    mut summary: EmissionSummary,
) -> Result<Artifacts, CliError> {
    create(dir)?;
    let paths = ["emission_draws.csv", "density_draws.csv", "bands.csv", "summary.json"].map(|f| dir.join(f));
    io::write_emission_draws(&paths[0], draws)?;
    io::write_density_draws(&paths[1], densities)?;
    let bands = dpm::pointwise_bands(densities, run.config.outputs.band_level)?;
    io::write_bands(&paths[2], &bands)?;
    if let Some(laws) = laws {
        let (l1, coverage) = truth_scores(densities, &bands, laws)?;
        summary.l1 = Some(l1);
        summary.band_coverage = Some(coverage);
    }
    io::write_json(&paths[3], &summary)?;
    Ok(paths.to_vec())
}

pub fn fit_emissions(run: &Run) -> Result<Artifacts, CliError> {
    let cfg = &run.config;
    let (y, meta) = load_data(run)?;
    let truth = meta.truth();
    let stores = cfg
        .pi2
        .cells
        .iter()
        .map(|cell| Ok((*cell, select_draws(&load_store(run, cell.n, cell.m)?, cfg.pi2.exterior_draws))))
        .collect::<Result<Vec<_>, CliError>>()?;
    let results = parallel(run.jobs, &stores, |(cell, store)| {
        let seed = derive_seed(cfg.data.seed, "pi2", cell.n as u64, cell.m as u64);
        let hyper = cfg.pi2.hyper(cell.n);
        let nested = NestedConfig {
            c: cfg.pi2.c,
            seed,
            grid_points: cfg.outputs.grid_points,
            init: cfg.pi2.nested_init(),
            grid: density_grid(run),
        };
        let out = dpm::nested_run(store, prefix(&y, cell.n)?, &hyper, &nested)?;
        let summary = EmissionSummary {
            n: cell.n,
            m: Some(cell.m),
            c: Some(cfg.pi2.c),
            s_max: hyper.s_max,
            draws: out.draws.len(),
            seed,
            band_level: cfg.outputs.band_level,
            l1: None,
            band_coverage: None,
        };
        let laws = truth.as_ref().map(|(_, l)| l.as_slice());
        write_emission_outputs(run, &run.pi2_cell(cell.n, cell.m), &out.draws, &out.densities, laws, summary)
    })?;
    Ok(results.into_iter().flatten().collect())
}

pub fn fit_full(run: &Run) -> Result<Artifacts, CliError> {
    let cfg = &run.config;
    let (y, meta) = load_data(run)?;
    let truth = meta.truth();
    let r = cfg.model.r;
    let results = parallel(run.jobs, &cfg.full.n, |&n| {
        let seed = derive_seed(cfg.data.seed, "full", n as u64, 0);
        let hyper = cfg.pi2.hyper(n);
        let chain = Pi1Section {
            iterations: cfg.full.iterations,
            burn_in: cfg.full.burn_in,
            thin: cfg.full.thin,
            gamma: cfg.full.gamma,
            beta: 1.0,
        }
        .chain(seed);
        let dirichlet = DirichletHyper::constant(r, 1, cfg.full.gamma, 1.0);
        let out = dpm::full_bayes_run(prefix(&y, n)?, &hyper, &dirichlet, &chain, Some(full_bayes_grid(run, prefix(&y, n)?)))?;
        let dir = run.full_cell(n);
        create(&dir)?;
        let (csv, json) = (dir.join("draws.csv"), dir.join("draws.json"));
        io::write_draw_store(&out.store, &csv, &json)?;
        let summary = EmissionSummary {
            n,
            m: None,
            c: None,
            s_max: hyper.s_max,
            draws: out.draws.len(),
            seed,
            band_level: cfg.outputs.band_level,
            l1: None,
            band_coverage: None,
        };
        let laws = truth.as_ref().map(|(_, l)| l.as_slice());
        let mut paths = write_emission_outputs(run, &dir, &out.draws, &out.densities, laws, summary)?;
        paths.extend([csv, json]);
        Ok(paths)
    })?;
    Ok(results.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub n: usize,
    #[serde(rename = "M")]
    pub m: u32,
    pub kappa: usize,
    pub seed: u64,
    pub estimate: SpectralEstimate,
    /// Baum–Welch estimate used to fix the labels.
    #[serde(rename = "Q_reference")]
    pub q_reference: TransitionMatrix,
    /// `min over relabellings of max |Q̂ − Q*|`, when the data were simulated.
    pub max_abs_error: Option<f64>,
}

fn max_abs_error(q: &TransitionMatrix, truth: &TransitionMatrix) -> f64 {
    stats::permutations(q.states())
        .iter()
        .map(|p| q.permuted(p).entries().iter().zip(truth.entries()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .fold(f64::INFINITY, f64::min)
}

pub fn spectral(run: &Run) -> Result<Artifacts, CliError> {
    let cfg = &run.config;
    let (y, meta) = load_data(run)?;
    let n = cfg.spectral.n.unwrap_or(y.len());
    let part = cfg.partition.build(cfg.spectral.m)?;
    let bins = part.coarsen(prefix(&y, n)?);
    let r = cfg.model.r;
    let em = EmConfig { tol: cfg.diagnostics.em_tol, max_iter: cfg.diagnostics.em_max_iter };
    let mle = diagnostics::baum_welch(&bins, r, None, &em)?;
    let omega_ref = DMatrix::from_fn(part.kappa(), r, |m, s| mle.omega_hat.weight(m, s));
    let seed = derive_seed(cfg.data.seed, "spectral", n as u64, cfg.spectral.m as u64);
    let config = SpectralConfig {
        power: PowerConfig { restarts: cfg.spectral.restarts, iterations: cfg.spectral.power_iterations },
        seed,
    };
    let estimate = spectral::spectral_estimate(&bins, r, &mle.q_hat, &omega_ref, &config)?;
    let max_abs_error = meta.truth().map(|(q, _)| max_abs_error(&estimate.q_hat, &q));
    let report = SpectralReport { n, m: cfg.spectral.m, kappa: part.kappa(), seed, estimate, q_reference: mle.q_hat, max_abs_error };
    let dir = run.spectral_dir();
    create(&dir)?;
    let path = dir.join("estimate.json");
    io::write_json(&path, &report)?;
    Ok(vec![path])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvmCell {
    pub n: usize,
    #[serde(rename = "M")]
    pub m: u32,
    pub kappa: usize,
    /// Row-major MLE of Q, labelled like the draws.
    #[serde(rename = "Q_mle")]
    pub q_mle: Option<Vec<f64>>,
    pub report: Option<BvmReport>,
    /// Set when the MLE or its observed information could not be computed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityCell {
    pub n: usize,
    pub report: MonotonicityReport,
}

fn posterior_mean_draw(store: &DrawStore) -> Result<Draw, CliError> {
    let r = store.r;
    let q_mean = histogram::summarize(store, 0.1)?.mean;
    let q = TransitionMatrix::from_rows(&q_mean.chunks(r).map(<[f64]>::to_vec).collect::<Vec<_>>())?;
    let omega = match store.kappa() {
        Some(kappa) => {
            let mut w = vec![0.0; kappa * r];
            for d in &store.draws {
                let o = d.omega.as_ref().expect("histogram draws carry weights");
                w.iter_mut().zip(o.as_slice()).for_each(|(a, b)| *a += b / store.len() as f64);
            }
            Some(HistogramEmissions::new(kappa, r, w)?)
        }
        None => None,
    };
    Ok(Draw { q, omega })
}

fn bvm_cell(run: &Run, y: &[f64], n: usize, m: u32, store: &DrawStore) -> Result<BvmCell, CliError> {
    let cfg = &run.config;
    let part = cfg.partition.build(m)?;
    let bins = part.coarsen(prefix(y, n)?);
    let em = EmConfig { tol: cfg.diagnostics.em_tol, max_iter: cfg.diagnostics.em_max_iter };
    let mut cell = BvmCell { n, m, kappa: part.kappa(), q_mle: None, report: None, error: None };
    // A failed fit (boundary MLE, singular information) is a finding about
    // this cell, not a reason to abandon the others.
    let mle = match diagnostics::baum_welch(&bins, store.r, None, &em) {
        Ok(m) => m,
        Err(e) => {
            cell.error = Some(e.to_string());
            return Ok(cell);
        }
    };
    let reference = posterior_mean_draw(store)?;
    let fitted = Draw { q: mle.q_hat.clone(), omega: Some(mle.omega_hat.clone()) };
    let perm = histogram::best_permutation(&fitted, &reference, &stats::permutations(store.r));
    let mle = mle.permuted(&perm);
    cell.q_mle = Some(mle.q_hat.entries().to_vec());
    match diagnostics::observed_information(&bins, &mle, cfg.diagnostics.fisher_step)
        .and_then(|fisher| diagnostics::bvm_compare(store, &mle.q_hat, n, Some(&fisher)))
    {
        Ok(report) => cell.report = Some(report),
        Err(e) => cell.error = Some(e.to_string()),
    }
    Ok(cell)
}

pub fn diagnose(run: &Run) -> Result<Artifacts, CliError> {
    let cfg = &run.config;
    let (y, _) = load_data(run)?;
    let cells = grid_cells(run);
    let stores = cells
        .iter()
        .map(|&(n, m)| Ok(((n, m), load_store(run, n, m)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let kappa = |m: u32| 1usize << m;
    let dir = run.diagnostics_dir();
    create(&dir)?;

    let at_n: Vec<(usize, &DrawStore)> =
        stores.iter().filter(|((n, _), _)| *n == cfg.diagnostics.n).map(|((_, m), s)| (kappa(*m), s)).collect();
    let heuristic: HeuristicReport =
        histogram::bin_tuning_heuristic(&at_n, kappa(cfg.diagnostics.reference_m), &cfg.diagnostics.alphas)?;
    let heuristic_path = dir.join("heuristic.json");
    io::write_json(&heuristic_path, &serde_json::json!({ "n": cfg.diagnostics.n, "report": heuristic }))?;

    let mut monotonicity = Vec::new();
    for &n in &cfg.grid.n {
        let per_n: Vec<(usize, &DrawStore)> =
            stores.iter().filter(|((k, _), _)| *k == n).map(|((_, m), s)| (kappa(*m), s)).collect();
        if per_n.len() >= 2 {
            let report = diagnostics::refinement_monotonicity(&per_n, cfg.diagnostics.monotonicity_slack)?;
            monotonicity.push(MonotonicityCell { n, report });
        }
    }
    let mono_path = dir.join("monotonicity.json");
    io::write_json(&mono_path, &monotonicity)?;

    let bvm = parallel(run.jobs, &stores, |((n, m), store)| bvm_cell(run, &y, *n, *m, store))?;
    let bvm_json = dir.join("bvm.json");
    io::write_json(&bvm_json, &bvm)?;
    let free = cfg.model.r * (cfg.model.r - 1);
    let mut header: Vec<String> = ["n", "M", "kappa"].map(String::from).to_vec();
    header.extend((0..free).map(|c| format!("ks_{}", c + 1)));
    header.extend(["cov_ratio_min", "cov_ratio_max"].map(String::from));
    let rows: Vec<Vec<f64>> = bvm
        .iter()
        .map(|c| {
            let mut row = vec![c.n as f64, c.m as f64, c.kappa as f64];
            match &c.report {
                Some(rep) => {
                    row.extend(&rep.ks);
                    row.push(rep.cov_ratio_min.unwrap_or(f64::NAN));
                    row.push(rep.cov_ratio_max.unwrap_or(f64::NAN));
                }
                None => row.extend(std::iter::repeat_n(f64::NAN, free + 2)),
            }
            row
        })
        .collect();
    let bvm_csv = dir.join("bvm.csv");
    write_table(&bvm_csv, &header, &rows)?;
    Ok(vec![heuristic_path, mono_path, bvm_json, bvm_csv])
}
