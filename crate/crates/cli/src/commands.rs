use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rjpoisson::model_select::{segment_report, SegmentReport};
use rjpoisson::posterior::{summarise, PosteriorEnsemble, PosteriorSummary};
use rjpoisson::preprocess::DailySeries;
use rjpoisson::rjmcmc::run_chain;
use rjpoisson::validation::{
    iterate_pipeline, observed_path, preprocess_series, replicate_predictive, summarise_replication, uniform_grid,
};
use rjpoisson::ExceedanceSeries;
use serde::{Deserialize, Serialize};

use crate::{CliError, Provenance, RunConfig};

pub const EXCEEDANCES: &str = "exceedances.txt";
pub const RAW_EXCEEDANCES: &str = "exceedances_raw.txt";
pub const SEASONAL: &str = "seasonal.txt";
pub const PREPROCESS_REPORT: &str = "preprocess.json";
pub const ENSEMBLE: &str = "ensemble.txt";
pub const POSTERIOR: &str = "posterior.json";
pub const SEGMENTS: &str = "segments.json";
pub const REPLICATION: &str = "replication.csv";
pub const VALIDATION: &str = "validation.json";
pub const PIPELINE: &str = "pipeline.json";

/// A JSON document with its provenance block first.
#[derive(Debug, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub provenance: Provenance,
    #[serde(flatten)]
    pub body: T,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SegmentsDocument {
    pub changepoints: Vec<f64>,
    pub segments: Vec<SegmentReport>,
}

pub struct Context {
    cfg: RunConfig,
    out: PathBuf,
    provenance: Provenance,
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_error(path))
}

fn in_file(path: &Path, e: rjpoisson::Error) -> CliError {
    match CliError::from(e) {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        CliError::Numerical(m) => CliError::Numerical(format!("{}: {m}", path.display())),
        other => other,
    }
}

/// Day 1 of an exceedance table written by `preprocess`, if recorded.
fn start_date(table: &str) -> Option<NaiveDate> {
    table.lines().find_map(|l| {
        let v = l.trim().strip_prefix('#')?.trim().strip_prefix("start_date=")?;
        NaiveDate::parse_from_str(v.trim(), "%Y-%m-%d").ok()
    })
}

impl Context {
    pub fn new(cfg: RunConfig, out: PathBuf) -> Self {
        let provenance = Provenance::new(&cfg);
        Self { cfg, out, provenance }
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.cfg.chain.seed)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_text(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let text = format!("{}\n{body}", self.provenance.comment());
        fs::write(&path, text).map_err(io_error(&path))?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, body: T) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let doc = Stamped {
            provenance: self.provenance.clone(),
            body,
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("reports serialise");
        text.push('\n');
        fs::write(&path, text).map_err(io_error(&path))?;
        Ok(path)
    }

    fn write_events(
        &self,
        name: &str,
        events: &ExceedanceSeries,
        start: Option<NaiveDate>,
    ) -> Result<PathBuf, CliError> {
        let mut body = String::new();
        if let Some(d) = start {
            body.push_str(&format!("# start_date={d}\n"));
        }
        body.push_str(&events.to_table_string());
        self.write_text(name, &body)
    }

    fn series(&self) -> Result<DailySeries, CliError> {
        let path = self
            .cfg
            .input
            .clone()
            .ok_or_else(|| CliError::Data("no input series; set 'input' in the configuration".into()))?;
        DailySeries::parse_csv(&read(&path)?).map_err(|e| in_file(&path, e))
    }

    fn events(&self) -> Result<(ExceedanceSeries, Option<NaiveDate>), CliError> {
        let path = self.cfg.events.clone().unwrap_or_else(|| self.path(EXCEEDANCES));
        let text = read(&path)?;
        let events = ExceedanceSeries::parse_table(&text).map_err(|e| in_file(&path, e))?;
        Ok((events, start_date(&text)))
    }

    fn ensemble(&self) -> Result<PosteriorEnsemble, CliError> {
        let path = self.cfg.ensemble.clone().unwrap_or_else(|| self.path(ENSEMBLE));
        PosteriorEnsemble::parse_table(&read(&path)?).map_err(|e| in_file(&path, e))
    }

    pub fn preprocess(&self) -> Result<Vec<PathBuf>, CliError> {
        let series = self.series()?;
        let pre = preprocess_series(&series, &self.cfg.pipeline(), &mut self.rng())?;
        log::info!(
            "{} exceedances in {} clusters above {}",
            pre.raw_events.len(),
            pre.n_clusters,
            pre.threshold
        );
        let start = Some(series.start_date());
        let summary = pre.summary();
        Ok(vec![
            self.write_events(EXCEEDANCES, &pre.declustered_events, start)?,
            self.write_events(RAW_EXCEEDANCES, &pre.raw_events, start)?,
            self.write_text(SEASONAL, &pre.seasonal.to_kv_string())?,
            self.write_json(PREPROCESS_REPORT, summary)?,
        ])
    }

    pub fn fit(&self) -> Result<Vec<PathBuf>, CliError> {
        let (events, start) = self.events()?;
        let ens = run_chain(&events, &self.cfg.prior, &self.cfg.chain, &mut self.rng())?;
        let summary = summarise(&ens, self.cfg.bandwidths.location, self.cfg.bandwidths.height, start)?;
        log::info!("posterior mode k = {}", summary.k_hat);
        Ok(vec![
            self.write_text(ENSEMBLE, &ens.to_table_string())?,
            self.write_json(POSTERIOR, summary)?,
        ])
    }

    /// Configured change-points, else those of the last `fit`, else none.
    fn changepoints(&self) -> Result<Vec<f64>, CliError> {
        if let Some(cps) = &self.cfg.changepoints {
            return Ok(cps.clone());
        }
        let path = self.path(POSTERIOR);
        if !path.exists() {
            return Ok(Vec::new());
        }
        let doc: Stamped<PosteriorSummary> =
            serde_json::from_str(&read(&path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        Ok(doc.body.point_estimate.changepoints().to_vec())
    }

    pub fn test(&self) -> Result<Vec<PathBuf>, CliError> {
        let (events, _) = self.events()?;
        let changepoints = self.changepoints()?;
        let segments = segment_report(&events, &changepoints)?;
        Ok(vec![
            self.write_json(SEGMENTS, SegmentsDocument { changepoints, segments })?
        ])
    }

    pub fn validate(&self) -> Result<Vec<PathBuf>, CliError> {
        let (events, _) = self.events()?;
        let ens = self.ensemble()?;
        let cfg = &self.cfg.replication;
        let grid = uniform_grid(events.horizon(), cfg.grid_points);
        let rep = replicate_predictive(&ens, cfg, Some(events.len()), &grid, &mut self.rng())?;
        let observed = observed_path(&events, &grid, cfg.time_reversed);
        let summary = summarise_replication(cfg, &rep, &observed)?;
        Ok(vec![
            self.write_text(REPLICATION, &rep.to_csv_string(&observed)?)?,
            self.write_json(VALIDATION, summary)?,
        ])
    }

    pub fn pipeline(&self) -> Result<Vec<PathBuf>, CliError> {
        let series = self.series()?;
        let out = iterate_pipeline(&series, &self.cfg.pipeline(), &mut self.rng())?;
        log::info!("{}", out.report.stop_reason);
        Ok(vec![
            self.write_events(EXCEEDANCES, &out.final_events, Some(series.start_date()))?,
            self.write_text(ENSEMBLE, &out.ensemble.to_table_string())?,
            self.write_text(REPLICATION, &out.replication.to_csv_string(&out.observed)?)?,
            self.write_json(PIPELINE, &out.report)?,
        ])
    }
}
