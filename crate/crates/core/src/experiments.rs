//! Threshold Monte Carlo and parameter sweeps.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapt::{maue_estimate, Range};
use crate::composition::CompositionTable;
use crate::config::{EngineConfig, Scenario};
use crate::director::Phase;
use crate::engine::{Engine, EngineError};
use crate::events::{calibrate_model, EventsError, ImportanceModel, ThresholdState};
use crate::psl::ShotSpec;
use crate::shotlog::{announcements, phase_runs, read_log};

/// Fraction of `trials` in which at least one of `n` importances drawn from
/// the calibrated model clears the cutoff for hit ratio `f`.
pub fn verify_threshold(n: usize, f: f64, trials: u64, seed: u64) -> Result<f64, EventsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Calibrate from a synthetic history, then sample the fitted model.
    let truth = Normal::new(5.0, 2.0).expect("valid normal");
    let history: Vec<f64> = (0..4096).map(|_| truth.sample(&mut rng)).collect();
    let model = calibrate_model(&history, history.len());
    let state = ThresholdState::new(f, n, &model)?;
    let fitted = Normal::new(model.mu, model.sigma.max(ImportanceModel::SIGMA_FLOOR)).expect("sigma is positive");
    let trials = trials.max(1);
    let mut hits = 0u64;
    for _ in 0..trials {
        let mut hit = false;
        for _ in 0..n {
            // Draw all n so the stream does not depend on early exits.
            hit |= fitted.sample(&mut rng) > state.cutoff;
        }
        hits += u64::from(hit);
    }
    Ok(hits as f64 / trials as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Transition duration in seconds.
    Transition,
    /// Announcements per minute.
    Frequency,
}

impl std::str::FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "transition" | "transition_duration" => Ok(Self::Transition),
            "frequency" | "switch_frequency" => Ok(Self::Frequency),
            other => Err(format!("unknown sweep parameter `{other}`")),
        }
    }
}

impl SweepParam {
    pub fn bounds(self, config: &EngineConfig) -> Range {
        match self {
            SweepParam::Transition => Range::new(0.0, config.adapt.qoe.shot_duration),
            SweepParam::Frequency => Range::new(1.0, 20.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub scenario: Scenario,
    pub config: EngineConfig,
    pub duration: f64,
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("value {value} outside {param:?} bounds [{min}, {max}]")]
    OutOfBounds { param: SweepParam, value: f64, min: f64, max: f64 },
    #[error("run for value {value} failed: {source}")]
    Run {
        value: f64,
        #[source]
        source: EngineError,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub log: PathBuf,
    pub announcements: usize,
    /// Mean blend length over mean local hold length.
    pub ratio: Option<f64>,
    pub maue: f64,
}

/// Engine config and first fetch time for one sweep value.
///
/// Frequency runs fetch every `60 / k` seconds starting half a period in,
/// with f = 1 so every fetch elects. If an event would not fit in one
/// period, shot and transition durations shrink together (keeping their
/// ratio) to 90% of the period.
pub fn sweep_config(param: SweepParam, value: f64, base: &EngineConfig) -> (EngineConfig, Option<f64>) {
    let mut c = base.clone();
    let q = &mut c.adapt.qoe;
    match param {
        SweepParam::Transition => {
            q.bounds.transition_duration.min = 0.0;
            q.transition_duration = value;
            (c, None)
        }
        SweepParam::Frequency => {
            let period = 60.0 / value;
            q.bounds.fetch_period = Range::new(period.min(q.bounds.fetch_period.min), period.max(q.bounds.fetch_period.max));
            q.bounds.f.min = q.bounds.f.min.min(1.0);
            q.f = 1.0;
            q.fetch_period = period;
            let shots = c.director.shots_per_event as f64;
            let length = shots * q.shot_duration + (shots + 1.0) * q.transition_duration;
            let budget = 0.9 * period;
            if length > budget {
                let k = budget / length;
                q.shot_duration *= k;
                q.transition_duration *= k;
                q.bounds.shot_duration.min = q.bounds.shot_duration.min.min(q.shot_duration);
                q.bounds.transition_duration.min = q.bounds.transition_duration.min.min(q.transition_duration);
            }
            (c, Some(period / 2.0))
        }
    }
}

/// Mean table score of the specs held in a log; the good group's mean
/// when no shot was held.
fn mean_composition(specs: &[String], table: &CompositionTable, pool_mean: f64) -> f64 {
    let scores: Vec<f64> = specs
        .iter()
        .filter_map(|s| s.parse::<ShotSpec>().ok())
        .map(|s| table.score(&s.template()))
        .collect();
    if scores.is_empty() {
        pool_mean
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    }
}

/// One headless run per value; logs go to `out/<param>_<value>.jsonl` and
/// a summary to `out/summary.csv`. Stops at the first failed run, keeping
/// what was written so far.
pub fn sweep(spec: &SweepSpec, out: &Path) -> Result<Vec<SweepRow>, SweepError> {
    let bounds = spec.param.bounds(&spec.config);
    if let Some(&value) = spec.values.iter().find(|v| !bounds.contains(**v)) {
        return Err(SweepError::OutOfBounds {
            param: spec.param,
            value,
            min: bounds.min,
            max: bounds.max,
        });
    }
    std::fs::create_dir_all(out)?;
    let mut csv = BufWriter::new(File::create(out.join("summary.csv"))?);
    writeln!(csv, "param,value,announcements,transition_shot_ratio,maue,log")?;
    let name = match spec.param {
        SweepParam::Transition => "transition",
        SweepParam::Frequency => "frequency",
    };
    let mut rows = Vec::new();
    for &value in &spec.values {
        let (config, first_fetch) = sweep_config(spec.param, value, &spec.config);
        let log = out.join(format!("{name}_{value}.jsonl"));
        let run = || -> Result<(CompositionTable, f64, crate::adapt::QoEConfig, crate::adapt::MaueTable), EngineError> {
            let mut engine = Engine::with_first_fetch(&spec.scenario, &config, first_fetch)?;
            let mut w = BufWriter::new(File::create(&log)?);
            engine.run(spec.duration, &mut w)?;
            w.flush()?;
            let pool = engine.catalog().good_group();
            let table = engine.catalog().table.clone();
            let pool_mean = pool.iter().map(|t| table.score(t)).sum::<f64>() / pool.len().max(1) as f64;
            Ok((table, pool_mean, config.adapt.qoe, engine.maue_table().clone()))
        };
        let (table, pool_mean, qoe, maue_table) = run().map_err(|source| SweepError::Run { value, source })?;
        let records = read_log(std::io::BufReader::new(File::open(&log)?))
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
        let runs = phase_runs(&records);
        let holds: Vec<_> = runs.iter().filter(|r| r.phase == Phase::Hold && r.spec.is_some()).collect();
        let blends: Vec<_> = runs.iter().filter(|r| r.phase == Phase::Blend).collect();
        let ratio = (!holds.is_empty()).then(|| {
            let h = holds.iter().map(|r| r.ticks as f64).sum::<f64>() / holds.len() as f64;
            let b = blends.iter().map(|r| r.ticks as f64).sum::<f64>() / blends.len().max(1) as f64;
            b / h
        });
        let specs: Vec<String> = holds.iter().filter_map(|r| r.spec.clone()).collect();
        let comp = mean_composition(&specs, &table, pool_mean);
        // Score the configured pacing; the frequency sweep's compressed
        // durations are an artifact of fitting k events per minute.
        let mut scored = qoe;
        if spec.param == SweepParam::Frequency {
            scored.transition_duration = spec.config.adapt.qoe.transition_duration;
        }
        let row = SweepRow {
            value,
            announcements: announcements(&records),
            ratio,
            maue: maue_estimate(&scored, &maue_table, comp),
            log: log.clone(),
        };
        writeln!(
            csv,
            "{name},{value},{},{},{:.6},{}",
            row.announcements,
            row.ratio.map_or(String::new(), |r| format!("{r:.6}")),
            row.maue,
            log.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default()
        )?;
        csv.flush()?;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_extremes() {
        assert_eq!(verify_threshold(7, 1.0, 2000, 1).unwrap(), 1.0);
        assert_eq!(verify_threshold(7, 0.0, 2000, 1).unwrap(), 0.0);
    }

    #[test]
    fn frequency_config_fits_period() {
        let (c, first) = sweep_config(SweepParam::Frequency, 3.0, &EngineConfig::default());
        let q = c.adapt.qoe;
        assert_eq!(q.fetch_period, 20.0);
        assert_eq!(first, Some(10.0));
        assert!(3.0 * q.shot_duration + 4.0 * q.transition_duration <= 18.0 + 1e-9);
        assert!((q.transition_duration / q.shot_duration - 0.4).abs() < 1e-12);
        q.validate().unwrap();
    }

    #[test]
    fn param_names() {
        assert_eq!("transition".parse::<SweepParam>().unwrap(), SweepParam::Transition);
        assert_eq!("Frequency".parse::<SweepParam>().unwrap(), SweepParam::Frequency);
        assert!("speed".parse::<SweepParam>().is_err());
    }
}
