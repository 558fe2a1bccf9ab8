use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Dataset, Event, ExceedanceConfig};
use crate::error::{Error, Result};
use crate::families::{Family, ParamVector};
use crate::fit::{exceedances, fit_exceedances, FitOptions, FitResult};
use crate::likelihood::log_interval_prob;
use crate::sampling::{cohort_template, rank_pvalue, simulate_template, CohortTemplate};

#[derive(Debug, Clone)]
pub struct ChisqGofOptions {
    /// Excess lifetimes at or above this value share one column.
    pub pool_min: f64,
    /// Width of the age bands.
    pub band: f64,
    pub b: usize,
    pub seed: u64,
    pub fit: FitOptions,
}

impl ChisqGofOptions {
    pub fn new(b: usize, seed: u64) -> Self {
        ChisqGofOptions {
            pool_min: 5.0,
            band: 1.0,
            b,
            seed,
            fit: FitOptions {
                n_jitter: 0,
                compute_se: false,
                ..Default::default()
            },
        }
    }
}

/// Counts by cohort (truncation window) and age band, with expected counts under a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContingencyTable {
    /// `(ltrunc, rtrunc)` of each row on the exceedance scale.
    pub cohorts: Vec<(f64, f64)>,
    /// `(lower, upper)` of each column on the exceedance scale; the last column is open.
    pub columns: Vec<(f64, f64)>,
    pub observed: Vec<Vec<f64>>,
    pub expected: Vec<Vec<f64>>,
}

impl ContingencyTable {
    /// Pearson statistic over the cells with positive expected count.
    pub fn statistic(&self) -> f64 {
        let mut s = 0.0;
        for (o_row, e_row) in self.observed.iter().zip(&self.expected) {
            for (&o, &e) in o_row.iter().zip(e_row) {
                if e > 0.0 {
                    s += (o - e) * (o - e) / e;
                }
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChisqGofResult {
    pub family: Family,
    pub thresh: f64,
    pub pool_min: f64,
    pub statistic: f64,
    pub pvalue: f64,
    pub b: usize,
    pub failures: usize,
    pub table: ContingencyTable,
    #[serde(skip)]
    pub replicates: Vec<Option<f64>>,
}

fn band_index(x: f64, offset: f64, g: f64) -> i64 {
    ((x + offset) / g + 1e-9).floor() as i64
}

/// Cross-classify exceedance counts by cohort and band and compute expected counts under `p`.
pub fn contingency_table(dx: &Dataset, p: &ParamVector, pool_min: f64, band: f64) -> Result<ContingencyTable> {
    if !(pool_min > 0.0) || !(band > 0.0) {
        return Err(Error::InvalidArgument("pooling point and band width must be positive".into()));
    }
    let u = dx.offset;
    let template = cohort_template(dx);
    let j0 = band_index(0.0, u, band);
    let mut columns = Vec::new();
    let mut j = j0;
    while (j as f64) * band - u < pool_min {
        let lo = (j as f64 * band - u).max(0.0);
        columns.push((lo, (j + 1) as f64 * band - u));
        j += 1;
    }
    let jp = j;
    columns.push(((jp as f64 * band - u).max(0.0), f64::INFINITY));

    let row_of: BTreeMap<(u64, u64), usize> = template
        .iter()
        .enumerate()
        .map(|(i, c)| ((c.ltrunc.to_bits(), c.rtrunc.to_bits()), i))
        .collect();
    let mut observed = vec![vec![0.0; columns.len()]; template.len()];
    for r in &dx.records {
        let contingency = match r.event {
            Event::Observed => true,
            Event::Interval => r.time2 - r.time1.max(0.0) <= band * (1.0 + 1e-9),
            _ => false,
        };
        if !contingency || r.window2.is_some() {
            return Err(Error::InvalidArgument(
                "chi-squared goodness of fit needs band-censored counts with one truncation window".into(),
            ));
        }
        let row = row_of[&(r.ltrunc1.max(0.0).to_bits(), r.rtrunc1.to_bits())];
        let j = band_index(r.time1.max(0.0), u, band);
        let col = ((j.min(jp) - j0) as usize).min(columns.len() - 1);
        observed[row][col] += r.weight;
    }
    for (k, col) in columns.iter().enumerate() {
        let total: f64 = observed.iter().map(|row| row[k]).sum();
        if total == 0.0 {
            return Err(Error::DegenerateTable(format!(
                "no observations in column ({}, {}]",
                col.0 + u,
                col.1 + u
            )));
        }
    }
    let expected = expected_counts(p, &template, &columns);
    Ok(ContingencyTable {
        cohorts: template.iter().map(|c| (c.ltrunc, c.rtrunc)).collect(),
        columns,
        observed,
        expected,
    })
}

fn expected_counts(p: &ParamVector, template: &[CohortTemplate], columns: &[(f64, f64)]) -> Vec<Vec<f64>> {
    template
        .iter()
        .map(|c| {
            let total = log_interval_prob(p, c.ltrunc, c.rtrunc);
            columns
                .iter()
                .map(|&(lo, hi)| {
                    let lp = log_interval_prob(p, lo.max(c.ltrunc), hi.min(c.rtrunc));
                    if lp == f64::NEG_INFINITY {
                        0.0
                    } else {
                        c.count as f64 * (lp - total).exp()
                    }
                })
                .collect()
        })
        .collect()
}

/// Pearson goodness-of-fit test on the cohort by age-band table with a parametric bootstrap null.
///
/// Each replicate redraws every cohort with its observed size from the fitted
/// model, bins the draws like the data, refits the model and recomputes the statistic.
pub fn chisq_gof(d: &Dataset, fr: &FitResult, opts: &ChisqGofOptions) -> Result<ChisqGofResult> {
    let dx = exceedances(d, &ExceedanceConfig::new(fr.thresh))?;
    let table = contingency_table(&dx, &fr.estimates, opts.pool_min, opts.band)?;
    let stat = table.statistic();
    let template = cohort_template(&dx);
    let mut fo = opts.fit.clone();
    fo.pieces = fr.estimates.thresholds().to_vec();
    fo.starts.push(fr.estimates.values().to_vec());
    let replicates: Vec<Option<f64>> = (0..opts.b)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
            rng.set_stream(b as u64 + 1);
            let sim = simulate_template(&fr.estimates, &template, Some(opts.band), fr.thresh, &mut rng).ok()?;
            let f = fit_exceedances(&sim, fr.family, fr.thresh, &fo).ok()?;
            let t = contingency_table(&sim, &f.estimates, opts.pool_min, opts.band).ok()?;
            Some(t.statistic())
        })
        .collect();
    let ok: Vec<f64> = replicates.iter().flatten().copied().collect();
    Ok(ChisqGofResult {
        family: fr.family,
        thresh: fr.thresh,
        pool_min: opts.pool_min,
        statistic: stat,
        pvalue: rank_pvalue(stat, &ok),
        b: opts.b,
        failures: opts.b - ok.len(),
        table,
        replicates,
    })
}
