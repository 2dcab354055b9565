//! Offline samples of the operator equilibrium across the policy box.

use std::io::{Read, Write};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{seek_mne, Market, ZoParams};
use crate::error::{Error, Result};
use crate::municipality::{social_welfare_cost, Components, MunicipalParams, Policy, PolicyBounds};
use crate::operators::{project_pt, project_tx, FlowSummary, PtStrategy, TxStrategy};

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRecord {
    pub sample_id: usize,
    pub z: Policy,
    pub pt: PtStrategy,
    pub tx: TxStrategy,
    pub summary: FlowSummary,
    pub components: Components,
    pub j: f64,
    pub converged: bool,
}

impl DatasetRecord {
    pub fn input(&self) -> Vec<f64> {
        self.z.to_vec()
    }

    /// Regression target: strategies, flow aggregates, then welfare cost.
    pub fn output(&self) -> Vec<f64> {
        let mut y = self.pt.to_vec();
        y.extend(self.tx.to_vec());
        y.extend(self.summary.to_vec());
        y.push(self.components.welfare);
        y
    }

    pub fn header() -> Vec<String> {
        let mut h = vec!["sample_id".to_string()];
        h.extend(Policy::NAMES.iter().map(|n| n.to_string()));
        h.extend(PtStrategy::NAMES.iter().map(|n| format!("pt_{n}")));
        h.extend(TxStrategy::NAMES.iter().map(|n| format!("tx_{n}")));
        h.extend(FlowSummary::NAMES.iter().map(|n| n.to_string()));
        h.extend(["j_sw", "j_em", "j_rev", "j", "converged"].map(String::from));
        h
    }

    fn row(&self) -> Vec<String> {
        let mut r = vec![self.sample_id.to_string()];
        let nums = self
            .z
            .to_vec()
            .into_iter()
            .chain(self.pt.to_vec())
            .chain(self.tx.to_vec())
            .chain(self.summary.to_vec())
            .chain([self.components.welfare, self.components.emissions, self.components.revenue, self.j]);
        r.extend(nums.map(|v| v.to_string()));
        r.push(self.converged.to_string());
        r
    }

    fn parse(row: &csv::StringRecord) -> Result<Self> {
        let width = Self::header().len();
        if row.len() != width {
            return Err(Error::domain(format!("dataset row has {} fields, expected {width}", row.len())));
        }
        let num = |i: usize| -> Result<f64> {
            row[i]
                .parse::<f64>()
                .map_err(|e| Error::domain(format!("dataset field {i}: {e}")))
        };
        let v: Vec<f64> = (1..width - 1).map(num).collect::<Result<_>>()?;
        Ok(Self {
            sample_id: row[0]
                .parse()
                .map_err(|e| Error::domain(format!("dataset sample id: {e}")))?,
            z: Policy::from_slice(&v[0..5]),
            pt: PtStrategy::from_slice(&v[5..9]),
            tx: TxStrategy::from_slice(&v[9..14]),
            summary: FlowSummary::from_slice(&v[14..21]),
            components: Components {
                welfare: v[21],
                emissions: v[22],
                revenue: v[23],
            },
            j: v[24],
            converged: row[width - 1]
                .parse()
                .map_err(|e| Error::domain(format!("dataset converged flag: {e}")))?,
        })
    }
}

pub fn write_dataset<W: Write>(records: &[DatasetRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(DatasetRecord::header())?;
    for r in records {
        w.write_record(r.row())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Vec<DatasetRecord>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    if r.headers()?.iter().ne(DatasetRecord::header().iter().map(String::as_str)) {
        return Err(Error::domain("dataset header does not match the expected columns"));
    }
    r.records().map(|row| DatasetRecord::parse(&row?)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingParams {
    pub n_samples: usize,
    pub seed: u64,
    /// Draw operator starting points uniformly instead of using the
    /// scenario's initial strategies.
    pub random_start: bool,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            n_samples: 200,
            seed: 0,
            random_start: true,
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(l, h)| if h > l { rng.gen_range(*l..=*h) } else { *l })
        .collect()
}

/// Result of a sampling batch; failed samples are listed, not fatal.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub records: Vec<DatasetRecord>,
    pub failures: Vec<(usize, String)>,
}

/// Solves the operator equilibrium at uniformly drawn policies. Sample `i`
/// draws from its own random stream, so results do not depend on which
/// samples already exist or how many threads run them.
#[allow(clippy::too_many_arguments)]
pub fn sample_mne_dataset(
    market: &Market,
    policy_bounds: &PolicyBounds,
    municipal: &MunicipalParams,
    start: (&PtStrategy, &TxStrategy),
    zo: &ZoParams,
    sampling: &SamplingParams,
    existing: &[DatasetRecord],
) -> Result<SampleBatch> {
    if sampling.n_samples == 0 {
        return Err(Error::domain("n_samples must be >= 1"));
    }
    zo.validate()?;
    let done: std::collections::BTreeSet<usize> = existing.iter().map(|r| r.sample_id).collect();
    let todo: Vec<usize> = (0..sampling.n_samples).filter(|i| !done.contains(i)).collect();
    let run = |&i: &usize| -> (usize, Result<DatasetRecord>) {
        let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
        rng.set_stream(i as u64);
        let z = Policy::from_slice(&uniform(&mut rng, &policy_bounds.lower.to_vec(), &policy_bounds.upper.to_vec()));
        let (pt0, tx0) = if sampling.random_start {
            let pt = PtStrategy::from_slice(&uniform(&mut rng, &[0.0; 4], &market.bounds.pt_upper().to_vec()));
            let tx = TxStrategy::from_slice(&uniform(&mut rng, &[0.0; 5], &market.bounds.tx_upper(z.license).to_vec()));
            (project_pt(&pt, &market.bounds), project_tx(&tx, &market.bounds, z.license))
        } else {
            (*start.0, *start.1)
        };
        let zo = ZoParams {
            seed: if sampling.random_start { rng.next_u64() } else { zo.seed },
            ..*zo
        };
        let out = seek_mne(market, &z, &pt0, &tx0, &zo).map(|eq| {
            let welfare = social_welfare_cost(&eq.state.solution.flows, &eq.state.graph, &market.demand.vot);
            let components = Components::from_summary(&z, &eq.pt, &eq.tx, &eq.state.summary, welfare, municipal);
            DatasetRecord {
                sample_id: i,
                z,
                pt: eq.pt,
                tx: eq.tx,
                summary: eq.state.summary,
                j: components.objective(municipal),
                components,
                converged: eq.converged && eq.state.solution.converged(),
            }
        });
        (i, out)
    };
    let results: Vec<(usize, Result<DatasetRecord>)> = todo.par_iter().map(run).collect();
    let mut records: Vec<DatasetRecord> = existing.iter().filter(|r| r.sample_id < sampling.n_samples).cloned().collect();
    let mut failures = Vec::new();
    for (i, r) in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => {
                log::warn!("sample {i} failed: {e}");
                failures.push((i, e.to_string()));
            }
        }
    }
    records.sort_by_key(|r| r.sample_id);
    Ok(SampleBatch { records, failures })
}
