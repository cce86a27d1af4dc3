//! Monte Carlo sample orchestration and the statistical error tables.
//!
//! Every sample owns an independent random stream: ChaCha8 seeded with the
//! master seed, with the ChaCha stream selector set to the sample id. Sample
//! ids are laid out as
//!
//! ```text
//! [0, n_ref)                          reference samples
//! [base + l*max(N), base + (l+1)*max(N))   evaluation block of repetition l
//! ```
//!
//! with `base = n_ref`; a run with `N` samples uses the first `N` ids of each
//! block. Samples may be computed on any number of worker threads, but every
//! reduction runs in ascending id order, so results do not depend on the
//! worker count.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{cesaro_average, inject_to_fine, lq_norm, mean_fields, AnalysisError, MeshLadder};
use crate::fields::{sample_kh_data, FieldError, FieldSet, GasParams, KhDataSpec};
use crate::grid::{Grid, GridError};
use crate::scheme::{solve, SchemeError, SchemeParams};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("invalid sample plan: {0}")]
    Invalid(String),
    #[error("evaluation ids [{eval_start}, {eval_end}) overlap reference ids [0, {n_ref})")]
    Overlap { eval_start: u64, eval_end: u64, n_ref: u64 },
    #[error("observed order needs positive errors, got ({0:e}, {1:e})")]
    Domain(f64, f64),
    #[error("sample {id}: {source}")]
    Sample { id: u64, source: SchemeError },
    #[error("could not start the worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplePlan {
    pub master_seed: u64,
    pub sample_counts: Vec<usize>,
    pub repetitions: usize,
    pub n_ref: usize,
    pub kh: KhDataSpec,
    pub gas: GasParams,
    /// Includes the final time.
    pub scheme: SchemeParams,
    pub workers: usize,
    /// First evaluation id; `None` places the evaluation blocks right after
    /// the reference ids.
    pub eval_base: Option<u64>,
    /// Lets evaluation ids coincide with reference ids. Only meant for
    /// self-comparison checks.
    pub allow_reference_reuse: bool,
}

impl Default for SamplePlan {
    fn default() -> Self {
        Self {
            master_seed: 20_240_601,
            sample_counts: vec![5, 10, 20, 40, 80],
            repetitions: 20,
            n_ref: 100,
            kh: KhDataSpec::default(),
            gas: GasParams::default(),
            scheme: SchemeParams::default(),
            workers: 1,
            eval_base: None,
            allow_reference_reuse: false,
        }
    }
}

impl SamplePlan {
    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |msg: String| Err(PlanError::Invalid(msg));
        if self.sample_counts.is_empty() {
            return bad("sample_counts is empty".into());
        }
        if self.sample_counts.contains(&0) {
            return bad("every sample count must be at least 1".into());
        }
        if self.repetitions < 1 {
            return bad("repetitions must be at least 1".into());
        }
        if self.n_ref < self.max_count() {
            return bad(format!("n_ref = {} is below the largest sample count {}", self.n_ref, self.max_count()));
        }
        if self.workers < 1 {
            return bad("workers must be at least 1".into());
        }
        self.kh.validate()?;
        self.gas.validate()?;
        let (eval_start, eval_end) = (self.eval_base(), self.eval_end());
        let n_ref = self.n_ref as u64;
        if !self.allow_reference_reuse && eval_start < n_ref && eval_end > 0 {
            return Err(PlanError::Overlap { eval_start, eval_end, n_ref });
        }
        Ok(())
    }

    pub fn max_count(&self) -> usize {
        self.sample_counts.iter().copied().max().unwrap_or(0)
    }

    fn eval_base(&self) -> u64 {
        self.eval_base.unwrap_or(self.n_ref as u64)
    }

    fn eval_end(&self) -> u64 {
        self.eval_base() + (self.repetitions * self.max_count()) as u64
    }

    pub fn reference_ids(&self) -> Vec<u64> {
        (0..self.n_ref as u64).collect()
    }

    /// The ids of the `n`-sample run in repetition `rep`.
    pub fn evaluation_ids(&self, rep: usize, n: usize) -> Vec<u64> {
        let start = self.eval_base() + (rep * self.max_count()) as u64;
        (start..start + n as u64).collect()
    }
}

/// The random stream of one sample.
pub fn sample_rng(master_seed: u64, sample_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(sample_id);
    rng
}

/// Kelvin-Helmholtz initial data of one sample.
pub fn sample_initial(plan: &SamplePlan, sample_id: u64, grid: &Grid) -> FieldSet {
    sample_kh_data(&plan.kh, grid, &mut sample_rng(plan.master_seed, sample_id))
}

/// Solves one sample to the final time and returns the last state.
pub fn run_sample(plan: &SamplePlan, sample_id: u64, grid: &Grid) -> Result<FieldSet, PlanError> {
    let initial = sample_initial(plan, sample_id, grid);
    let t_final = plan.scheme.t_final;
    let traj = solve(&initial, &plan.gas, &plan.scheme, &[t_final])
        .map_err(|source| PlanError::Sample { id: sample_id, source })?;
    Ok(traj.snapshots.into_iter().last().map(|(_, s)| s).expect("final snapshot requested"))
}

/// Cellwise mean, accumulated in the given order.
pub fn empirical_mean(fields: &[FieldSet]) -> Result<FieldSet, AnalysisError> {
    mean_fields(fields)
}

/// `log2(err_coarse / err_fine)`.
pub fn observed_order(err_coarse: f64, err_fine: f64) -> Result<f64, PlanError> {
    if err_coarse > 0.0 && err_fine > 0.0 {
        Ok((err_coarse / err_fine).log2())
    } else {
        Err(PlanError::Domain(err_coarse, err_fine))
    }
}

/// Componentwise L^1 distances `(rho, m1, m2)`.
pub fn l1_distance(a: &FieldSet, b: &FieldSet) -> Result<[f64; 3], AnalysisError> {
    if a.grid() != b.grid() {
        return Err(FieldError::GridMismatch.into());
    }
    let grid = a.grid();
    let mut out = [0.0; 3];
    let (va, vb) = (a.variables(), b.variables());
    for c in 0..3 {
        let diff: Vec<f64> = va[c].iter().zip(&vb[c]).map(|(x, y)| x - y).collect();
        out[c] = lq_norm(grid, &diff, 1.0)?;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRow {
    /// Mesh size, present in total-error tables.
    pub h: Option<f64>,
    pub n: usize,
    /// `(rho, m1, m2)`.
    pub err: [f64; 3],
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
}

const VARS: [&str; 3] = ["rho", "m1", "m2"];

impl ErrorTable {
    /// Observed orders between row `i - 1` and row `i`; `None` for the first
    /// row or when an error vanishes.
    pub fn orders(&self, i: usize) -> [Option<f64>; 3] {
        let mut out = [None; 3];
        if i == 0 || i >= self.rows.len() {
            return out;
        }
        for (c, o) in out.iter_mut().enumerate() {
            *o = observed_order(self.rows[i - 1].err[c], self.rows[i].err[c]).ok();
        }
        out
    }

    /// Mean of the defined orders of variable `c`.
    pub fn mean_order(&self, c: usize) -> Option<f64> {
        let orders: Vec<f64> = (1..self.rows.len()).filter_map(|i| self.orders(i)[c]).collect();
        (!orders.is_empty()).then(|| orders.iter().sum::<f64>() / orders.len() as f64)
    }

    fn has_h(&self) -> bool {
        self.rows.iter().any(|r| r.h.is_some())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.has_h() {
            out.push_str("h,");
        }
        out.push_str("N,err_rho,ord_rho,err_m1,ord_m1,err_m2,ord_m2\n");
        for (i, row) in self.rows.iter().enumerate() {
            if self.has_h() {
                let _ = write!(out, "{},", fmt_f64(row.h.unwrap_or(f64::NAN)));
            }
            let _ = write!(out, "{}", row.n);
            for (err, ord) in row.err.iter().zip(self.orders(i)) {
                let ord = ord.map(fmt_f64).unwrap_or_default();
                let _ = write!(out, ",{},{}", fmt_f64(*err), ord);
            }
            out.push('\n');
        }
        out
    }

    /// log10 columns for plotting, with `N^{-1/2}` and `N^{-1}` slopes
    /// anchored at the first density error.
    pub fn plot_data(&self) -> String {
        let mut out = String::new();
        if self.has_h() {
            out.push_str("h,log10_h,");
        }
        out.push_str("N,log10_N");
        for v in VARS {
            let _ = write!(out, ",log10_err_{v}");
        }
        out.push_str(",log10_ref_half,log10_ref_one\n");
        let Some(first) = self.rows.first() else {
            return out;
        };
        let (n0, e0) = (first.n as f64, first.err[0]);
        for row in &self.rows {
            if self.has_h() {
                let h = row.h.unwrap_or(f64::NAN);
                let _ = write!(out, "{},{},", fmt_f64(h), fmt_f64(h.log10()));
            }
            let n = row.n as f64;
            let _ = write!(out, "{},{}", row.n, fmt_f64(n.log10()));
            for e in row.err {
                let _ = write!(out, ",{}", fmt_f64(e.log10()));
            }
            let half = e0 * (n / n0).powf(-0.5);
            let one = e0 * (n / n0).powi(-1);
            let _ = writeln!(out, ",{},{}", fmt_f64(half.log10()), fmt_f64(one.log10()));
        }
        out
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

type CacheKey = (usize, usize, u64, u64, u64);

fn cache_key(grid: &Grid, id: u64) -> CacheKey {
    (grid.nx(), grid.ny(), grid.lx().to_bits(), grid.ly().to_bits(), id)
}

/// Runs the samples of a plan on a worker pool, optionally memoizing final
/// states so that studies sharing samples compute each one only once.
pub struct Study {
    plan: SamplePlan,
    pool: rayon::ThreadPool,
    cache: Option<Mutex<HashMap<CacheKey, Arc<FieldSet>>>>,
}

impl Study {
    pub fn new(plan: SamplePlan) -> Result<Self, PlanError> {
        plan.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(plan.workers)
            .build()
            .map_err(|e| PlanError::Pool(e.to_string()))?;
        Ok(Self { plan, pool, cache: None })
    }

    /// Keeps every computed sample in memory.
    pub fn with_cache(mut self) -> Self {
        self.cache = Some(Mutex::new(HashMap::new()));
        self
    }

    pub fn plan(&self) -> &SamplePlan {
        &self.plan
    }

    fn sample(&self, grid: &Grid, id: u64) -> Result<Arc<FieldSet>, PlanError> {
        let Some(cache) = &self.cache else {
            return Ok(Arc::new(run_sample(&self.plan, id, grid)?));
        };
        let key = cache_key(grid, id);
        if let Some(hit) = cache.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let fresh = Arc::new(run_sample(&self.plan, id, grid)?);
        cache.lock().expect("cache lock").insert(key, fresh.clone());
        Ok(fresh)
    }

    // Cesàro average of one sample over every grid of the ladder.
    fn cesaro_sample(&self, ladder: &MeshLadder, id: u64) -> Result<FieldSet, PlanError> {
        let members = ladder
            .grids()
            .iter()
            .map(|g| self.sample(g, id).map(|s| (*s).clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(cesaro_average(&members)?)
    }

    /// Final states of `ids` on `grid`, in the order of `ids`.
    pub fn samples(&self, grid: &Grid, ids: &[u64]) -> Result<Vec<FieldSet>, PlanError> {
        self.pool.install(|| {
            ids.par_iter()
                .map(|id| self.sample(grid, *id).map(|s| (*s).clone()))
                .collect()
        })
    }

    /// Cesàro-averaged samples over the ladder, in the order of `ids`.
    pub fn cesaro_samples(&self, ladder: &MeshLadder, ids: &[u64]) -> Result<Vec<FieldSet>, PlanError> {
        self.pool
            .install(|| ids.par_iter().map(|id| self.cesaro_sample(ladder, *id)).collect())
    }

    /// Mean of the reference samples on `grid`.
    pub fn reference(&self, grid: &Grid) -> Result<FieldSet, PlanError> {
        Ok(empirical_mean(&self.samples(grid, &self.plan.reference_ids())?)?)
    }

    /// Mean of the Cesàro-averaged reference samples.
    pub fn cesaro_reference(&self, ladder: &MeshLadder) -> Result<FieldSet, PlanError> {
        Ok(empirical_mean(&self.cesaro_samples(ladder, &self.plan.reference_ids())?)?)
    }

    // E(N) for every N of the plan, given a way to produce the largest
    // evaluation block of a repetition.
    fn error_rows(
        &self,
        reference: &FieldSet,
        mut block: impl FnMut(&[u64]) -> Result<Vec<FieldSet>, PlanError>,
    ) -> Result<Vec<[f64; 3]>, PlanError> {
        let plan = &self.plan;
        let mut sums = vec![[0.0; 3]; plan.sample_counts.len()];
        for rep in 0..plan.repetitions {
            let fields = block(&plan.evaluation_ids(rep, plan.max_count()))?;
            for (sum, &n) in sums.iter_mut().zip(&plan.sample_counts) {
                let mean = empirical_mean(&fields[..n])?;
                let mean = if mean.grid() == reference.grid() {
                    mean
                } else {
                    inject_to_fine(&mean, reference.grid())?
                };
                let d = l1_distance(&mean, reference)?;
                for c in 0..3 {
                    sum[c] += d[c];
                }
            }
        }
        let l = plan.repetitions as f64;
        Ok(sums.into_iter().map(|s| s.map(|v| v / l)).collect())
    }

    fn table(&self, errs: Vec<[f64; 3]>) -> ErrorTable {
        let rows = self
            .plan
            .sample_counts
            .iter()
            .zip(errs)
            .map(|(&n, err)| ErrorRow { h: None, n, err })
            .collect();
        ErrorTable { rows }
    }

    /// `E1(N)` on `grid` for every sample count of the plan. The reference may
    /// live on a finer nested grid, in which case means are injected to it.
    pub fn e1_table(&self, grid: &Grid, reference: &FieldSet) -> Result<ErrorTable, PlanError> {
        let errs = self.error_rows(reference, |ids| self.samples(grid, ids))?;
        Ok(self.table(errs))
    }

    /// `E2(N)`: as `E1` with every sample replaced by its Cesàro average over
    /// the ladder.
    pub fn e2_table(&self, ladder: &MeshLadder, reference: &FieldSet) -> Result<ErrorTable, PlanError> {
        let errs = self.error_rows(reference, |ids| self.cesaro_samples(ladder, ids))?;
        Ok(self.table(errs))
    }

    /// Total error for `(grid, N)` pairs ordered from coarse to fine against
    /// the mean of the reference samples on `reference_grid`. In Cesàro mode
    /// the sample on pair `k` is averaged over the grids of pairs `0..=k`, and
    /// the reference samples over all pair grids plus the reference grid.
    pub fn total_error(
        &self,
        pairs: &[(Grid, usize)],
        reference_grid: &Grid,
        cesaro: bool,
    ) -> Result<ErrorTable, PlanError> {
        if pairs.is_empty() {
            return Err(PlanError::Invalid("no (h, N) pairs".into()));
        }
        if pairs.windows(2).any(|w| !(w[0].0.h() > w[1].0.h())) {
            return Err(PlanError::Invalid("pairs must be sorted by decreasing h".into()));
        }
        for (g, n) in pairs {
            if g.h() < reference_grid.h() {
                return Err(PlanError::Invalid(format!(
                    "reference mesh h = {} is coarser than h = {}",
                    reference_grid.h(),
                    g.h()
                )));
            }
            g.refinement_ratio(reference_grid)?;
            if *n < 1 || *n > self.plan.n_ref {
                return Err(PlanError::Invalid(format!("sample count {n} outside [1, n_ref]")));
            }
        }
        let grids: Vec<Grid> = pairs.iter().map(|(g, _)| *g).collect();
        let reference = if cesaro {
            let mut all = grids.clone();
            all.push(*reference_grid);
            self.cesaro_reference(&MeshLadder::new(all)?)?
        } else {
            self.reference(reference_grid)?
        };

        // repetition blocks are sized by the largest pair count
        let block = pairs.iter().map(|(_, n)| *n).max().unwrap_or(1);
        let mut rows = Vec::with_capacity(pairs.len());
        for (k, (grid, n)) in pairs.iter().enumerate() {
            let ladder = MeshLadder::new(grids[..=k].to_vec());
            let mut sum = [0.0; 3];
            for rep in 0..self.plan.repetitions {
                let start = self.plan.eval_base() + (rep * block) as u64;
                let ids: Vec<u64> = (start..start + *n as u64).collect();
                let fields = if cesaro {
                    self.cesaro_samples(ladder.as_ref().map_err(Clone::clone)?, &ids)?
                } else {
                    self.samples(grid, &ids)?
                };
                let mean = inject_to_fine(&empirical_mean(&fields)?, reference.grid())?;
                let d = l1_distance(&mean, &reference)?;
                for c in 0..3 {
                    sum[c] += d[c];
                }
            }
            let err = sum.map(|v| v / self.plan.repetitions as f64);
            rows.push(ErrorRow { h: Some(grid.h()), n: *n, err });
        }
        Ok(ErrorTable { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::KhCoefficients;
    use proptest::prelude::*;

    fn small_plan() -> SamplePlan {
        SamplePlan {
            master_seed: 7,
            sample_counts: vec![1, 2, 4],
            repetitions: 2,
            n_ref: 4,
            kh: KhDataSpec { eps_perturb: 0.1, ..KhDataSpec::default() },
            scheme: SchemeParams { t_final: 0.05, ..SchemeParams::default() },
            ..SamplePlan::default()
        }
    }

    fn g(n: usize) -> Grid {
        Grid::unit_square(n).unwrap()
    }

    #[test]
    fn plan_validation() {
        assert!(small_plan().validate().is_ok());
        let bad = |f: fn(&mut SamplePlan)| {
            let mut p = small_plan();
            f(&mut p);
            p.validate().is_err()
        };
        assert!(bad(|p| p.sample_counts.clear()));
        assert!(bad(|p| p.sample_counts.push(0)));
        assert!(bad(|p| p.repetitions = 0));
        assert!(bad(|p| p.n_ref = 3));
        assert!(bad(|p| p.workers = 0));
        let mut p = small_plan();
        p.eval_base = Some(2);
        assert!(matches!(p.validate(), Err(PlanError::Overlap { .. })));
        p.allow_reference_reuse = true;
        assert!(p.validate().is_ok());
    }

    #[test]
    fn id_layout_is_disjoint_and_nested() {
        let p = small_plan();
        assert_eq!(p.reference_ids(), vec![0, 1, 2, 3]);
        assert_eq!(p.evaluation_ids(0, 2), vec![4, 5]);
        assert_eq!(p.evaluation_ids(1, 4), vec![8, 9, 10, 11]);
        let refs = p.reference_ids();
        for rep in 0..p.repetitions {
            assert!(p.evaluation_ids(rep, 4).iter().all(|id| !refs.contains(id)));
        }
    }

    #[test]
    fn sample_streams() {
        let p = small_plan();
        let a = run_sample(&p, 3, &g(8)).unwrap();
        let b = run_sample(&p, 3, &g(8)).unwrap();
        assert_eq!(a, b);
        let c0 = KhCoefficients::sample(10, &mut sample_rng(7, 0));
        let c1 = KhCoefficients::sample(10, &mut sample_rng(7, 1));
        assert_ne!(c0, c1);
        // streams do not depend on which other samples were drawn first
        let _ = KhCoefficients::sample(10, &mut sample_rng(7, 5));
        assert_eq!(KhCoefficients::sample(10, &mut sample_rng(7, 0)), c0);

        let flat = SamplePlan { kh: KhDataSpec { eps_perturb: 0.0, ..p.kh }, ..p };
        let first = run_sample(&flat, 0, &g(8)).unwrap();
        for id in 1..4 {
            assert_eq!(run_sample(&flat, id, &g(8)).unwrap(), first);
        }
    }

    #[test]
    fn empirical_mean_examples() {
        let a = FieldSet::uniform(g(4), 1.5, [0.2, -0.4]).unwrap();
        assert_eq!(empirical_mean(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(empirical_mean(&[a.clone(), a.clone(), a.clone()]).unwrap().max_abs_diff(&a), 0.0);
        let b = FieldSet::uniform(g(4), 1.5, [-0.2, 0.4]).unwrap();
        let m = empirical_mean(&[a, b]).unwrap();
        assert!(m.mom().iter().all(|v| v == &[0.0, 0.0]));
        assert!(empirical_mean(&[]).is_err());
    }

    #[test]
    fn observed_order_examples() {
        assert!((observed_order(4e-2, 2e-2).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(observed_order(3e-3, 3e-3).unwrap(), 0.0);
        assert!((observed_order(1.85e-3, 1.65e-3).unwrap() - 0.17).abs() < 0.005);
        assert!(observed_order(0.0, 1.0).is_err());
        assert!(observed_order(1.0, -1.0).is_err());
    }

    #[test]
    fn table_csv() {
        let t = ErrorTable {
            rows: vec![
                ErrorRow { h: None, n: 5, err: [4e-2, 1.0, 0.0] },
                ErrorRow { h: None, n: 10, err: [2e-2, 1.0, 0.0] },
            ],
        };
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "N,err_rho,ord_rho,err_m1,ord_m1,err_m2,ord_m2");
        assert_eq!(
            lines[1],
            "5,4.0000000000000001e-2,,1.0000000000000000e0,,0.0000000000000000e0,"
        );
        let fields: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(fields[2].parse::<f64>().unwrap(), 1.0);
        assert_eq!(fields[4].parse::<f64>().unwrap(), 0.0);
        assert_eq!(fields[6], "");
        assert_eq!(t.mean_order(0), Some(1.0));

        let plot = t.plot_data();
        assert!(plot.starts_with("N,log10_N,log10_err_rho,log10_err_m1,log10_err_m2,log10_ref_half,log10_ref_one\n"));
        let total = ErrorTable { rows: vec![ErrorRow { h: Some(0.5), n: 5, err: [1.0; 3] }] };
        assert!(total.to_csv().starts_with("h,N,"));
    }

    #[test]
    fn formatting_round_trips() {
        for v in [0.1, 1.0 / 3.0, 6.02e23, -2.5e-300, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn self_comparison_is_zero() {
        let plan = SamplePlan {
            sample_counts: vec![4],
            repetitions: 1,
            eval_base: Some(0),
            allow_reference_reuse: true,
            ..small_plan()
        };
        let study = Study::new(plan).unwrap().with_cache();
        let reference = study.reference(&g(8)).unwrap();
        let t = study.e1_table(&g(8), &reference).unwrap();
        assert_eq!(t.rows[0].err, [0.0; 3]);
        let total = study.total_error(&[(g(8), 4)], &g(8), false).unwrap();
        assert_eq!(total.rows[0].err, [0.0; 3]);
    }

    #[test]
    fn single_sample_error_is_plain_distance() {
        let plan = SamplePlan { sample_counts: vec![1], repetitions: 1, ..small_plan() };
        let study = Study::new(plan.clone()).unwrap();
        let reference = study.reference(&g(8)).unwrap();
        let t = study.e1_table(&g(8), &reference).unwrap();
        let u = run_sample(&plan, plan.evaluation_ids(0, 1)[0], &g(8)).unwrap();
        assert_eq!(t.rows[0].err, l1_distance(&u, &reference).unwrap());
    }

    #[test]
    fn e2_on_single_grid_is_e1_and_workers_do_not_matter() {
        let study = Study::new(small_plan()).unwrap();
        let grid = g(8);
        let reference = study.reference(&grid).unwrap();
        let e1 = study.e1_table(&grid, &reference).unwrap();
        let ladder = MeshLadder::new(vec![grid]).unwrap();
        let e2 = study.e2_table(&ladder, &study.cesaro_reference(&ladder).unwrap()).unwrap();
        assert_eq!(e1.to_csv(), e2.to_csv());

        let parallel = Study::new(SamplePlan { workers: 3, ..small_plan() }).unwrap();
        let again = parallel.e1_table(&grid, &parallel.reference(&grid).unwrap()).unwrap();
        assert_eq!(e1.to_csv(), again.to_csv());
    }

    #[test]
    fn identical_samples_have_no_error() {
        let mut plan = small_plan();
        plan.kh.eps_perturb = 0.0;
        let study = Study::new(plan).unwrap();
        let ladder = MeshLadder::unit_square(4, 2).unwrap();
        let e2 = study.e2_table(&ladder, &study.cesaro_reference(&ladder).unwrap()).unwrap();
        assert!(e2.rows.iter().all(|r| r.err == [0.0; 3]));
    }

    #[test]
    fn total_error_checks_pairs() {
        let study = Study::new(small_plan()).unwrap();
        assert!(study.total_error(&[(g(8), 1), (g(4), 2)], &g(16), false).is_err());
        assert!(study.total_error(&[(g(8), 1), (g(8), 2)], &g(16), false).is_err());
        assert!(study.total_error(&[(g(16), 1)], &g(8), false).is_err());
        assert!(study.total_error(&[(g(4), 5)], &g(8), false).is_err());
        assert!(study.total_error(&[], &g(8), false).is_err());
        let t = study.total_error(&[(g(4), 1), (g(8), 2)], &g(16), true).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[1].h, Some(0.125));
        assert!(t.rows.iter().all(|r| r.err.iter().all(|e| *e > 0.0)));
    }

    #[test]
    fn cached_and_fresh_samples_agree() {
        let cached = Study::new(small_plan()).unwrap().with_cache();
        let fresh = Study::new(small_plan()).unwrap();
        let ids = [2, 0, 1];
        let a = cached.samples(&g(8), &ids).unwrap();
        let b = cached.samples(&g(8), &ids).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, fresh.samples(&g(8), &ids).unwrap());
    }

    proptest! {
        #[test]
        fn mean_commutes_with_injection(vals in prop::collection::vec(0.5f64..2.0, 48)) {
            let grid = g(4);
            let fields: Vec<FieldSet> = vals
                .chunks(16)
                .map(|c| FieldSet::new(grid, c.to_vec(), c.iter().map(|r| [r - 1.0, 0.5 * r]).collect()).unwrap())
                .collect();
            let fine = g(16);
            let a = inject_to_fine(&empirical_mean(&fields).unwrap(), &fine).unwrap();
            let injected: Vec<FieldSet> = fields.iter().map(|f| inject_to_fine(f, &fine).unwrap()).collect();
            let b = empirical_mean(&injected).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
