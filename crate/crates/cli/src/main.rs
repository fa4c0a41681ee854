mod args;

use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;

use args::{Cli, Command, EvalArgs, IndexSource};
use tensorenc::harness::{
    encode_file, evaluate_encoder, ingest, run_pipeline, synth_corpus, train_encoder, EncoderModel, EvalReport,
    IndexFile, SignatureFile,
};
use tensorenc::retrieval::EncoderTag;

/// Worker threads; affects speed only, never results.
const THREADS_ENV: &str = "TENC_THREADS";

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("{THREADS_ENV} must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => {
            let corpus = synth_corpus(&a.config()).context("generating corpus")?;
            match (&a.query_out, a.queries_per_category) {
                (Some(qpath), q) if q > 0 => {
                    let (db, queries) = corpus.split_queries(q)?;
                    db.export(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
                    queries.export(qpath).with_context(|| format!("writing {}", qpath.display()))?;
                    eprintln!("wrote {} database and {} query images", db.len(), queries.len());
                }
                (Some(_), _) => bail!("--query-out needs --queries-per-category of at least 1"),
                (None, _) => {
                    corpus.export(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
                    eprintln!("wrote {} images", corpus.len());
                }
            }
        }
        Command::Train(a) => {
            let corpus = read_features(&a.features)?;
            let params = a.hyper.params(a.seed)?;
            let model = train_encoder(a.encoder, &params, &corpus).context("training")?;
            model.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
        }
        Command::Encode(a) => {
            let model = read_model(&a.model)?;
            let corpus = read_features(&a.features)?;
            let sigs = SignatureFile {
                encoder: model.tag(),
                label_names: corpus.label_names().to_vec(),
                signatures: encode_file(&model, &corpus, None).context("encoding")?,
            };
            sigs.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
        }
        Command::Index(a) => {
            let model = read_model(&a.model)?;
            let sigs = match a.source() {
                IndexSource::Features(p) => {
                    let corpus = read_features(p)?;
                    SignatureFile {
                        encoder: model.tag(),
                        label_names: corpus.label_names().to_vec(),
                        signatures: encode_file(&model, &corpus, None).context("encoding")?,
                    }
                }
                IndexSource::Signatures(p) => {
                    SignatureFile::load(p).with_context(|| format!("reading {}", p.display()))?
                }
            };
            let index = IndexFile::new(model, sigs)?;
            index.build_index()?;
            index.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
        }
        Command::Query(a) => {
            let index = IndexFile::load(&a.index).with_context(|| format!("reading {}", a.index.display()))?;
            let file = read_features(&a.image)?;
            let Some(image) = file.images().get(a.item) else {
                bail!("{} holds {} images, no item {}", a.image.display(), file.len(), a.item);
            };
            let q = index.model.encode(image).context("encoding query")?;
            let result = index.build_index()?.query(&q, a.top)?;
            println!("rank\titem\tlabel\tdistance");
            for (rank, hit) in result.hits.iter().enumerate() {
                let label = index
                    .signatures
                    .label_names
                    .get(hit.label as usize)
                    .map_or_else(|| hit.label.to_string(), Clone::clone);
                println!("{}\t{}\t{}\t{:.9}", rank + 1, hit.item_id, label, hit.distance);
            }
        }
        Command::Eval(a) => {
            let config = a.eval.run_config(vec![a.encoder], a.seed)?;
            let (db, queries) = read_split(&a.eval)?;
            let (row, model) = evaluate_encoder(&config, a.encoder, &db, &queries)?;
            if let Some(p) = &a.model_out {
                model.save(p).with_context(|| format!("writing {}", p.display()))?;
            }
            let report = EvalReport {
                config,
                shape: db.shape(),
                database_size: db.len(),
                query_count: queries.len(),
                categories: db.label_names().len(),
                rows: vec![row],
            };
            emit(&report, &a.eval)?;
        }
        Command::Report(a) => {
            let encoders = if a.encoders.is_empty() { EncoderTag::ALL.to_vec() } else { a.encoders.clone() };
            let config = a.eval.run_config(encoders, a.seed)?;
            let (db, queries) = read_split(&a.eval)?;
            let report = run_pipeline(&config, &db, &queries)?;
            emit(&report, &a.eval)?;
        }
    }
    Ok(())
}

fn read_features(path: &Path) -> Result<tensorenc::harness::FeatureFile> {
    ingest(path).with_context(|| format!("reading {}", path.display()))
}

fn read_model(path: &Path) -> Result<EncoderModel> {
    EncoderModel::load(path).with_context(|| format!("reading {}", path.display()))
}

fn read_split(a: &EvalArgs) -> Result<(tensorenc::harness::FeatureFile, tensorenc::harness::FeatureFile)> {
    Ok((read_features(&a.train)?, read_features(&a.queries)?))
}

/// Report to `--out` (or stdout); timings to `--timings` (or stderr).
fn emit(report: &EvalReport, a: &EvalArgs) -> Result<()> {
    let text = report.render();
    match &a.out {
        Some(p) => fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    let timings = report.render_timings();
    match &a.timings {
        Some(p) => fs::write(p, &timings).with_context(|| format!("writing {}", p.display()))?,
        None => eprint!("{timings}"),
    }
    Ok(())
}
