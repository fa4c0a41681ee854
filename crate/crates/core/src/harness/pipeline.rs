//! Train, encode, index and score one or more encoders on a database /
//! query split.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use super::format::FeatureFile;
use super::model::{train_encoder, EncoderModel, EncoderParams};
use crate::error::{Error, Result};
use crate::multilinear::SubspaceDims;
use crate::retrieval::{mean_average_precision, ApNormalization, EncodedIndex, EncoderTag, MapOptions, Signature};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Encoders evaluated, in report order.
    pub encoders: Vec<EncoderTag>,
    pub params: EncoderParams,
    /// Cut-offs for MAP@k, reported in this order.
    pub k_list: Vec<usize>,
    pub normalization: ApNormalization,
    pub exclude_self: bool,
    /// Each stage is timed this many times; the median is reported.
    pub timing_reps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            encoders: EncoderTag::ALL.to_vec(),
            params: EncoderParams::default(),
            k_list: vec![1, 5, 10],
            normalization: ApNormalization::default(),
            exclude_self: false,
            timing_reps: 5,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.encoders.is_empty() {
            return Err(Error::invalid("no encoders selected"));
        }
        if self.k_list.is_empty() || self.k_list.contains(&0) {
            return Err(Error::invalid(format!("k list {:?} must be non-empty and positive", self.k_list)));
        }
        if self.timing_reps == 0 {
            return Err(Error::invalid("timing repetitions must be at least 1"));
        }
        self.params.validate()
    }
}

/// Median wall-clock seconds per stage. Raw has no training stage.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimings {
    pub train: Option<f64>,
    pub encode_per_image: f64,
    pub query_per_query: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderResult {
    pub encoder: EncoderTag,
    pub signature_dim: usize,
    /// MAP@k in `k_list` order.
    pub map: Vec<f64>,
    pub timings: StageTimings,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub config: RunConfig,
    pub shape: (usize, usize, usize),
    pub database_size: usize,
    pub query_count: usize,
    pub categories: usize,
    pub rows: Vec<EncoderResult>,
}

/// Runs every encoder of `config` over `database` (training and index set)
/// and `queries`.
pub fn run_pipeline(config: &RunConfig, database: &FeatureFile, queries: &FeatureFile) -> Result<EvalReport> {
    config.validate()?;
    let mut rows = Vec::with_capacity(config.encoders.len());
    for &tag in &config.encoders {
        rows.push(evaluate_encoder(config, tag, database, queries)?.0);
    }
    Ok(EvalReport {
        config: config.clone(),
        shape: database.shape(),
        database_size: database.len(),
        query_count: queries.len(),
        categories: database.label_names().len(),
        rows,
    })
}

/// One row of the report, plus the trained model.
pub fn evaluate_encoder(
    config: &RunConfig,
    tag: EncoderTag,
    database: &FeatureFile,
    queries: &FeatureFile,
) -> Result<(EncoderResult, EncoderModel)> {
    if database.shape() != queries.shape() {
        return Err(Error::shape(format!(
            "database images are {:?}, queries are {:?}",
            database.shape(),
            queries.shape()
        )));
    }
    if queries.is_empty() {
        return Err(Error::invalid("query set is empty"));
    }
    let reps = config.timing_reps.max(1);

    let (model, train_secs) = timed(reps, || train_encoder(tag, &config.params, database))
        .map_err(|e| e.in_stage("train"))?;
    let train = (tag != EncoderTag::Raw).then_some(train_secs);

    let (db_sigs, db_secs) =
        timed(reps, || encode_file(&model, database, None)).map_err(|e| e.in_stage("encode"))?;
    let query_labels = map_labels(database, queries);
    let q_sigs = encode_file(&model, queries, Some(&query_labels)).map_err(|e| e.in_stage("encode"))?;

    let index = EncodedIndex::build(db_sigs, tag).map_err(|e| e.in_stage("index"))?;
    let options = MapOptions {
        exclude_self: config.exclude_self,
        normalization: config.normalization,
    };
    let kmax = *config.k_list.iter().max().unwrap();
    let ((), query_secs) = timed(reps, || {
        q_sigs
            .par_iter()
            .map(|q| index.query(&q.values, kmax).map(drop))
            .collect::<Result<()>>()
    })
    .map_err(|e| e.in_stage("query"))?;
    let map = config
        .k_list
        .iter()
        .map(|&k| mean_average_precision(&index, &q_sigs, k, options))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("evaluate"))?;

    let result = EncoderResult {
        encoder: tag,
        signature_dim: model.signature_dim(),
        map,
        timings: StageTimings {
            train,
            encode_per_image: db_secs / database.len() as f64,
            query_per_query: query_secs / queries.len() as f64,
        },
    };
    Ok((result, model))
}

/// Encodes every image; item ids are positions within `file`.
pub fn encode_file(model: &EncoderModel, file: &FeatureFile, labels: Option<&[u32]>) -> Result<Vec<Signature>> {
    let labels = labels.unwrap_or(file.labels());
    file.images()
        .par_iter()
        .enumerate()
        .map(|(i, img)| {
            Ok(Signature {
                values: model.encode(img)?,
                item_id: i as u64,
                label: labels[i],
            })
        })
        .collect()
}

/// Query labels re-expressed in the database's label table; names missing
/// there get fresh ids past the end of the table.
pub fn map_labels(database: &FeatureFile, queries: &FeatureFile) -> Vec<u32> {
    let table = database.label_names();
    let mut extra: Vec<&str> = Vec::new();
    (0..queries.len())
        .map(|i| {
            let name = queries.label_name(i);
            if let Some(p) = table.iter().position(|t| t == name) {
                return p as u32;
            }
            let p = extra.iter().position(|&e| e == name).unwrap_or_else(|| {
                extra.push(name);
                extra.len() - 1
            });
            (table.len() + p) as u32
        })
        .collect()
}

/// Runs `f` `reps` times; returns the first result and the median time.
fn timed<T>(reps: usize, mut f: impl FnMut() -> Result<T>) -> Result<(T, f64)> {
    let mut times = Vec::with_capacity(reps);
    let mut first = None;
    for _ in 0..reps {
        let start = Instant::now();
        let out = f()?;
        times.push(start.elapsed().as_secs_f64());
        first.get_or_insert(out);
    }
    Ok((first.unwrap(), median(&mut times)))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl EvalReport {
    /// Deterministic report: `[config]`, `[corpus]`, `[map]`, in that order,
    /// keys within a section in fixed order. Timings are left out so that
    /// identical runs give identical bytes; see [`render_timings`](Self::render_timings).
    pub fn render(&self) -> String {
        let c = &self.config;
        let p = &c.params;
        let mut s = String::new();
        let opt = |v: Option<usize>, none: &str| v.map_or(none.to_string(), |v| v.to_string());
        let _ = writeln!(s, "# tensorenc retrieval report v1");
        let _ = writeln!(s, "[config]");
        let lines: Vec<(&str, String)> = vec![
            ("encoders", c.encoders.iter().map(|e| e.as_str()).collect::<Vec<_>>().join(",")),
            ("seed", p.seed.to_string()),
            ("k", join(&c.k_list)),
            (
                "ap_normalization",
                match c.normalization {
                    ApNormalization::RetrievedRelevant => "retrieved-relevant".into(),
                    ApNormalization::TotalRelevant => "total-relevant".into(),
                },
            ),
            ("exclude_self", c.exclude_self.to_string()),
            ("components", p.components.to_string()),
            ("weighted_posterior", p.weighted_posterior.to_string()),
            ("em_max_iter", p.em_max_iter.to_string()),
            ("em_tol", format!("{:e}", p.em_tol)),
            ("atoms", opt(p.atoms, "auto")),
            ("sparsity", p.sparsity.to_string()),
            ("ksvd_iters", p.ksvd_iters.to_string()),
            ("omp_tol", format!("{:e}", p.omp_tol)),
            ("train_descriptors", p.train_descriptors.to_string()),
            ("truncation", opt(p.truncation, "full")),
            (
                "mpca_dims",
                match &p.mpca_dims {
                    SubspaceDims::Explicit(d) => join(d),
                    SubspaceDims::VarianceRatio(q) => format!("q={q}"),
                },
            ),
            ("mpca_sweeps", p.mpca_sweeps.to_string()),
            ("mpca_tol", format!("{:e}", p.mpca_tol)),
            ("rank", p.rank.to_string()),
            ("timing_reps", c.timing_reps.to_string()),
        ];
        for (k, v) in lines {
            let _ = writeln!(s, "{k} = {v}");
        }
        let (h, w, d) = self.shape;
        let _ = writeln!(s, "[corpus]");
        let _ = writeln!(s, "shape = {h}x{w}x{d}");
        let _ = writeln!(s, "database = {}", self.database_size);
        let _ = writeln!(s, "queries = {}", self.query_count);
        let _ = writeln!(s, "categories = {}", self.categories);
        let _ = writeln!(s, "[map]");
        let _ = write!(s, "{:<8} {:>9}", "encoder", "dim");
        for k in &c.k_list {
            let _ = write!(s, " {:>8}", format!("top-{k}"));
        }
        s.push('\n');
        for row in &self.rows {
            let _ = write!(s, "{:<8} {:>9}", row.encoder.as_str(), row.signature_dim);
            for m in &row.map {
                let _ = write!(s, " {m:>8.6}");
            }
            s.push('\n');
        }
        s
    }

    /// `[timings]` section: median seconds per stage.
    pub fn render_timings(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[timings]");
        let _ = writeln!(s, "# seconds, median of {} repetitions", self.config.timing_reps);
        let _ = writeln!(s, "{:<8} {:>12} {:>16} {:>15}", "encoder", "train", "encode_per_image", "query_per_query");
        for row in &self.rows {
            let t = &row.timings;
            let train = t.train.map_or("-".to_string(), |v| format!("{v:.6}"));
            let _ = writeln!(
                s,
                "{:<8} {:>12} {:>16.9} {:>15.9}",
                row.encoder.as_str(),
                train,
                t.encode_per_image,
                t.query_per_query
            );
        }
        s
    }

    /// MAP row for one encoder.
    pub fn map_for(&self, tag: EncoderTag) -> Option<&[f64]> {
        self.rows.iter().find(|r| r.encoder == tag).map(|r| r.map.as_slice())
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}
