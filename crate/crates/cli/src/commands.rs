use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use drskit::counter::{detailed_report, evaluate_corpus, EvalConfig, SenseTable};
use drskit::drs::{parse_corpus, render_corpus, Drs, ErrorMode};
use drskit::jury::{
    jury_report, length_bins, length_csv, rank_documents, semtag_subsets, significance, PhenomenonCatalog, RunSet,
    SignificanceMode,
};
use drskit::neural::{checkpoint, predict_all, train, FrozenEmbeddings, ModelConfig, SourceText, TrainOptions};
use drskit::referee::validate;
use drskit::seqio::{attach_tags, build_target_vocab, load_split, parse_tag_file, Schedule, SplitPaths};

use crate::args::*;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn open(path: &Path) -> Result<Box<dyn BufRead>, CliError> {
    if path.as_os_str() == "-" {
        Ok(Box::new(BufReader::new(io::stdin())))
    } else {
        Ok(Box::new(BufReader::new(File::open(path).map_err(io_err(path))?)))
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    let mut s = String::new();
    open(path)?.read_to_string(&mut s).map_err(io_err(path))?;
    Ok(s)
}

fn read_corpus(path: &Path) -> Result<Vec<Drs>, CliError> {
    parse_corpus(open(path)?, ErrorMode::FailFast)
        .map(|c| c.docs)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Keeps positions aligned when a prediction file has unparsable blocks.
fn read_predictions(path: &Path) -> Result<Vec<Drs>, CliError> {
    let corpus = parse_corpus(open(path)?, ErrorMode::SkipAndReport).map_err(data)?;
    for e in &corpus.errors {
        eprintln!("drskit: {}: {e} (scored as ill-formed)", path.display());
    }
    Ok(corpus.docs)
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), CliError> {
    match output {
        Some(p) => std::fs::write(p, text).map_err(io_err(p)),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>")))?;
            out.flush().map_err(io_err(Path::new("<stdout>")))
        }
    }
}

fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn to_json(v: impl serde::Serialize) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn doc_id(d: &Drs, i: usize) -> String {
    d.meta.id.clone().unwrap_or_else(|| format!("#{}", i + 1))
}

fn eval_config(m: &MatchArgs, g: &Global) -> EvalConfig {
    EvalConfig {
        restarts: m.restarts,
        default_sense: m.default_sense,
        seed: g.seed.unwrap_or(0),
        validate_first: !m.no_validate,
        jobs: g.jobs.max(1),
        ..EvalConfig::default()
    }
}

fn sense_table(m: &MatchArgs) -> Result<Option<SenseTable>, CliError> {
    if let Some(p) = &m.senses {
        let t = SenseTable::parse(&read_text(p)?)
            .ok_or_else(|| CliError::Data(format!("{}: expected lemma<TAB>sense lines", p.display())))?;
        return Ok(Some(t));
    }
    if let Some(p) = &m.train_corpus {
        return Ok(Some(SenseTable::from_corpus(&read_corpus(p)?)));
    }
    Ok(None)
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(data)
}

pub fn parse(a: &ParseArgs, g: &Global) -> Result<i32, CliError> {
    let mode = if a.keep_going {
        ErrorMode::SkipAndReport
    } else {
        ErrorMode::FailFast
    };
    let corpus =
        parse_corpus(open(&a.input)?, mode).map_err(|e| CliError::Data(format!("{}: {e}", a.input.display())))?;
    for e in &corpus.errors {
        eprintln!("drskit: {}: {e}", a.input.display());
    }
    let text = match g.format {
        Format::Text => render_corpus(&corpus.docs),
        Format::Json => json_text(&to_json(&corpus.docs)),
        Format::Tsv => {
            let mut s = String::from("doc\tclause\n");
            for (i, d) in corpus.docs.iter().enumerate() {
                for c in d.clauses() {
                    writeln!(s, "{}\t{c}", doc_id(d, i)).unwrap();
                }
            }
            s
        }
    };
    emit(None, &text)?;
    Ok(if corpus.errors.is_empty() { 0 } else { 1 })
}

pub fn validate_cmd(a: &ValidateArgs, g: &Global) -> Result<i32, CliError> {
    let docs = read_corpus(&a.input)?;
    let reports: Vec<_> = thread_pool(g.jobs)?.install(|| docs.par_iter().map(validate).collect());
    let bad = reports.iter().filter(|r| !r.well_formed).count();
    let text = match g.format {
        Format::Text => {
            let mut s = String::new();
            for (i, (d, r)) in docs.iter().zip(&reports).enumerate() {
                if r.well_formed {
                    writeln!(s, "{}\tok", doc_id(d, i)).unwrap();
                }
                for v in &r.violations {
                    writeln!(s, "{}\t{:?}\t{}", doc_id(d, i), v.code, v.detail).unwrap();
                }
            }
            writeln!(s, "{} documents, {bad} ill-formed", docs.len()).unwrap();
            s
        }
        Format::Json => json_text(&json!({
            "documents": docs.len(),
            "ill_formed": bad,
            "reports": docs.iter().zip(&reports).enumerate().map(|(i, (d, r))| json!({
                "id": doc_id(d, i),
                "well_formed": r.well_formed,
                "violations": to_json(&r.violations),
            })).collect::<Vec<_>>(),
        })),
        Format::Tsv => {
            let mut s = String::from("doc\tcode\tdetail\n");
            for (i, (d, r)) in docs.iter().zip(&reports).enumerate() {
                for v in &r.violations {
                    writeln!(s, "{}\t{:?}\t{}", doc_id(d, i), v.code, v.detail).unwrap();
                }
            }
            s
        }
    };
    emit(None, &text)?;
    Ok(if bad == 0 { 0 } else { 1 })
}

pub fn score(a: &ScoreArgs, g: &Global) -> Result<i32, CliError> {
    let preds = read_predictions(&a.pred)?;
    let golds = read_corpus(&a.gold)?;
    let cfg = eval_config(&a.matching, g);
    let senses = sense_table(&a.matching)?;
    let detailed = if a.detailed {
        Some(detailed_report(&preds, &golds, &cfg, senses.as_ref()).map_err(data)?)
    } else {
        None
    };
    let report = match &detailed {
        Some(d) => d.score.clone(),
        None => evaluate_corpus(&preds, &golds, &cfg).map_err(data)?,
    };
    let ids: Vec<String> = golds.iter().enumerate().map(|(i, d)| doc_id(d, i)).collect();
    let text = match g.format {
        Format::Text => {
            let mut s = String::new();
            writeln!(s, "Matched clauses   {}", report.matched).unwrap();
            writeln!(s, "Produced clauses  {}", report.produced).unwrap();
            writeln!(s, "Gold clauses      {}", report.gold).unwrap();
            writeln!(s, "Precision         {:.3}", report.precision).unwrap();
            writeln!(s, "Recall            {:.3}", report.recall).unwrap();
            writeln!(s, "F1                {:.3}", report.f1).unwrap();
            writeln!(s, "Ill-formed        {}", report.ill_formed_count).unwrap();
            if let Some(d) = &detailed {
                s.push('\n');
                write!(s, "{d}").unwrap();
            }
            if a.per_doc {
                s.push('\n');
                for (id, (d, f)) in ids.iter().zip(report.docs.iter().zip(&report.per_doc_f1)) {
                    writeln!(s, "{id}\t{f:.3}\t{}/{}/{}", d.matched, d.produced, d.gold).unwrap();
                }
            }
            s
        }
        Format::Json => {
            let mut v = to_json(&report);
            if let Some(d) = &detailed {
                v["detailed"] = d
                    .rows()
                    .into_iter()
                    .map(|(label, value)| json!({"label": label, "value": value}))
                    .collect();
            }
            if a.per_doc {
                v["docs"] = ids
                    .iter()
                    .zip(&report.docs)
                    .map(|(id, d)| json!({"id": id, "f1": d.f1(), "matched": d.matched, "produced": d.produced, "gold": d.gold, "ill_formed": d.ill_formed}))
                    .collect();
            } else if let Some(o) = v.as_object_mut() {
                o.remove("per_doc_f1");
            }
            json_text(&v)
        }
        Format::Tsv => {
            let mut s = String::from("metric\tvalue\n");
            for (k, v) in [
                ("matched", report.matched as f64),
                ("produced", report.produced as f64),
                ("gold", report.gold as f64),
                ("precision", report.precision),
                ("recall", report.recall),
                ("f1", report.f1),
                ("ill_formed", report.ill_formed_count as f64),
            ] {
                writeln!(s, "{k}\t{v}").unwrap();
            }
            if let Some(d) = &detailed {
                for (label, value) in d.rows() {
                    writeln!(s, "{label}\t{}", value.map_or(String::new(), |x| x.to_string())).unwrap();
                }
            }
            if a.per_doc {
                for (id, d) in ids.iter().zip(&report.docs) {
                    writeln!(s, "doc:{id}\t{}", d.f1()).unwrap();
                }
            }
            s
        }
    };
    emit(None, &text)?;
    Ok(0)
}

fn attach_all(docs: &mut [Drs], tag_files: &[PathBuf]) -> Result<(), CliError> {
    for p in tag_files {
        let blocks = parse_tag_file(&read_text(p)?).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        attach_tags(docs, &blocks).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

pub fn train_cmd(a: &TrainArgs, g: &Global) -> Result<i32, CliError> {
    let mut cfg = match &a.config {
        Some(p) => {
            ModelConfig::from_text(&read_text(p)?).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?
        }
        None => ModelConfig::default(),
    };
    for kv in &a.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(data)?;
    if a.gold.is_none() && a.silver.is_none() && a.bronze.is_none() {
        return Err(CliError::Usage(
            "train needs at least one of --gold, --silver, --bronze".into(),
        ));
    }
    let schedule = match a.schedule {
        ScheduleKind::Standard => Schedule::Standard {
            pretrain: cfg.pretrain_epochs,
            finetune: cfg.finetune_epochs,
        },
        ScheduleKind::NoGold => Schedule::NoGold {
            pretrain: cfg.pretrain_epochs,
            finetune: cfg.finetune_epochs,
        },
    };
    let paths = SplitPaths {
        gold: a.gold.clone(),
        silver: a.silver.clone(),
        bronze: a.bronze.clone(),
        dev: a.dev.clone(),
        test: None,
    };
    let mut split = load_split(&paths, &schedule).map_err(data)?;
    for docs in split.tiers.values_mut() {
        attach_all(docs, &a.tags)?;
    }
    attach_all(&mut split.dev, &a.tags)?;
    let embeddings = a.embeddings.clone().or_else(|| cfg.embedding_file.clone());
    let frozen = embeddings
        .map(|p| FrozenEmbeddings::load(&p).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))))
        .transpose()?;
    let (model, log) = train(&split, cfg, frozen, TrainOptions { jobs: g.jobs.max(1) }, |_| {}).map_err(data)?;
    checkpoint::save(&model, &a.output).map_err(|e| CliError::Data(format!("{}: {e}", a.output.display())))?;
    let text = match g.format {
        Format::Json => json_text(&json!({
            "skipped": log.skipped,
            "parameters": model.num_params(),
            "epochs": log.epochs.iter().map(|e| json!({
                "phase": e.phase, "epoch": e.epoch, "updates": e.updates,
                "tokens": e.tokens, "loss": e.loss, "dev_f1": e.dev_f1,
            })).collect::<Vec<_>>(),
            "best": log.best.map(|(p, e)| json!({"phase": p, "epoch": e})),
        })),
        _ => format!("parameters={}\n{log}", model.num_params()),
    };
    emit(a.log.as_deref(), &text)?;
    Ok(0)
}

pub fn predict_cmd(a: &PredictArgs, g: &Global) -> Result<i32, CliError> {
    let model = checkpoint::load(&a.model).map_err(|e| CliError::Data(format!("{}: {e}", a.model.display())))?;
    let mut docs = match a.input_kind {
        InputKind::Drs => read_corpus(&a.input)?,
        InputKind::Sentences => read_text(&a.input)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let mut d = Drs::default();
                d.meta.sentence = Some(l.split_whitespace().collect::<Vec<_>>().join(" "));
                d
            })
            .collect(),
    };
    attach_all(&mut docs, &a.tags)?;
    let sources = docs
        .iter()
        .enumerate()
        .map(|(i, d)| SourceText::from_doc(d).map_err(|e| CliError::Data(format!("input {}: {e}", i + 1))))
        .collect::<Result<Vec<_>, _>>()?;
    let beam = a.beam.unwrap_or(model.config.beam_size);
    let steps = a.max_steps.unwrap_or(model.config.max_decode_steps);
    let mut preds = predict_all(&model, &sources, beam, steps, g.jobs).map_err(data)?;
    for (p, d) in preds.iter_mut().zip(&docs) {
        p.meta.id = d.meta.id.clone();
    }
    let text = match g.format {
        Format::Json => json_text(
            &preds
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    json!({
                        "id": doc_id(p, i),
                        "sentence": p.meta.sentence,
                        "malformed": p.meta.is_malformed(),
                        "diagnostics": p.meta.diagnostics,
                        "clauses": p.clauses().iter().map(|c| c.to_string()).collect::<Vec<_>>(),
                    })
                })
                .collect::<Value>(),
        ),
        _ => render_corpus(&preds),
    };
    emit(a.output.as_deref(), &text)?;
    let malformed = preds.iter().filter(|p| p.meta.is_malformed()).count();
    if malformed > 0 {
        eprintln!(
            "drskit: {malformed} of {} outputs are malformed (marked with %!)",
            preds.len()
        );
    }
    Ok(0)
}

fn parse_system(spec: &str) -> Result<(String, Vec<PathBuf>), CliError> {
    let (name, files) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--system expects NAME=RUN[,RUN...], got {spec:?}")))?;
    let files: Vec<PathBuf> = files.split(',').filter(|f| !f.is_empty()).map(PathBuf::from).collect();
    if name.is_empty() || files.is_empty() {
        return Err(CliError::Usage(format!(
            "--system expects NAME=RUN[,RUN...], got {spec:?}"
        )));
    }
    Ok((name.to_string(), files))
}

pub fn jury_cmd(a: &JuryArgs, g: &Global) -> Result<i32, CliError> {
    let specs = a
        .systems
        .iter()
        .map(|s| parse_system(s))
        .collect::<Result<Vec<_>, _>>()?;
    let mut golds = read_corpus(&a.gold)?;
    if let Some(p) = &a.semtags {
        attach_all(&mut golds, std::slice::from_ref(p))?;
    }
    let cfg = eval_config(&a.matching, g);
    let senses = sense_table(&a.matching)?;
    let mut systems = Vec::new();
    for (name, files) in &specs {
        let runs = files
            .iter()
            .map(|f| read_predictions(f))
            .collect::<Result<Vec<_>, _>>()?;
        systems.push(RunSet::score(name.clone(), runs, &golds, &cfg, senses.as_ref()).map_err(data)?);
    }
    let baseline = a.baseline.clone().unwrap_or_else(|| specs[0].0.clone());
    let base = systems
        .iter()
        .position(|s| s.system == baseline)
        .ok_or_else(|| CliError::Usage(format!("--baseline {baseline:?} is not among the systems")))?;
    let seed = g.seed.unwrap_or(0);
    let ids: Vec<String> = golds.iter().enumerate().map(|(i, d)| doc_id(d, i)).collect();
    let names: Vec<String> = systems.iter().map(|s| s.system.clone()).collect();

    let table = jury_report(&systems);
    let base_f1 = systems[base].mean_doc_f1();
    let mut tests = Vec::new();
    for (i, s) in systems.iter().enumerate().filter(|(i, _)| *i != base) {
        let r = significance(
            &s.mean_doc_f1(),
            &base_f1,
            SignificanceMode::Auto { samples: a.samples },
            a.alpha,
            seed,
        )
        .map_err(data)?;
        tests.push((i, r));
    }
    let subsets = a
        .semtags
        .as_ref()
        .map(|_| {
            let catalog = match &a.catalog {
                Some(p) => PhenomenonCatalog::from_text(&read_text(p)?).map_err(data)?,
                None => PhenomenonCatalog::default(),
            };
            semtag_subsets(&golds, &systems, &catalog, &baseline).map_err(data)
        })
        .transpose()?;
    let lengths: Vec<usize> = golds.iter().map(|d| d.meta.tokens().len()).collect();
    let bins = if lengths.contains(&0) {
        eprintln!("drskit: some gold documents have no sentence; skipping the length table");
        None
    } else {
        Some(length_bins(&lengths, &systems, &a.bins).map_err(|e| CliError::Usage(e.to_string()))?)
    };
    if let (Some(p), Some(b)) = (&a.length_csv, &bins) {
        std::fs::write(p, length_csv(&names, b)).map_err(io_err(p))?;
    }
    let rank_targets: Vec<usize> = if systems.len() == 1 {
        vec![0]
    } else {
        (0..systems.len()).filter(|&i| i != base).collect()
    };
    let rankings = rank_targets
        .iter()
        .map(|&i| rank_documents(&systems[i].mean_doc_f1(), &base_f1, &ids, a.rank).map(|r| (i, r)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(data)?;

    let text = match g.format {
        Format::Json => json_text(&json!({
            "systems": names,
            "baseline": baseline,
            "detailed": to_json(&table),
            "significance": tests.iter().map(|(i, r)| json!({"system": names[*i], "result": to_json(r)})).collect::<Vec<_>>(),
            "phenomena": subsets.as_ref().map(to_json),
            "lengths": bins.as_ref().map(to_json),
            "rankings": rankings.iter().map(|(i, r)| json!({"system": names[*i], "ranking": to_json(r)})).collect::<Vec<_>>(),
        })),
        Format::Tsv => {
            let mut s = format!("# detailed\n{}", table.to_tsv());
            s.push_str("\n# significance\nsystem\tbaseline\tobserved\tp_value\tsignificant\n");
            for (i, r) in &tests {
                writeln!(
                    s,
                    "{}\t{baseline}\t{}\t{}\t{}",
                    names[*i], r.observed, r.p_value, r.significant
                )
                .unwrap();
            }
            if let Some(sub) = &subsets {
                write!(s, "\n# phenomena\n{}", sub.to_tsv()).unwrap();
            }
            if let Some(b) = &bins {
                write!(s, "\n# lengths\n{}", length_csv(&names, b).replace(',', "\t")).unwrap();
            }
            for (i, r) in &rankings {
                writeln!(s, "\n# ranking {}\nlist\tid\tvalue", names[*i]).unwrap();
                for d in &r.worst {
                    writeln!(s, "worst\t{}\t{}", d.id, d.value).unwrap();
                }
                for d in &r.best_relative {
                    writeln!(s, "best_relative\t{}\t{}", d.id, d.value).unwrap();
                }
            }
            s
        }
        Format::Text => {
            let mut s = format!("Detailed scores (averaged over runs)\n{}", table.to_text());
            if !tests.is_empty() {
                writeln!(s, "\nApproximate randomization against {baseline} (alpha {})", a.alpha).unwrap();
                for (i, r) in &tests {
                    let method = match r.method {
                        drskit::jury::Method::Exact => "exact".to_string(),
                        drskit::jury::Method::Sampled(n) => format!("{n} samples"),
                    };
                    writeln!(
                        s,
                        "{:<16} diff {:.4}  p {:.4}  {}  ({method})",
                        names[*i],
                        r.observed,
                        r.p_value,
                        if r.significant {
                            "significant"
                        } else {
                            "not significant"
                        }
                    )
                    .unwrap();
                }
            }
            if let Some(sub) = &subsets {
                write!(
                    s,
                    "\nPhenomena ({baseline} in full, others as differences)\n{}",
                    sub.to_text()
                )
                .unwrap();
            }
            if let Some(b) = &bins {
                writeln!(s, "\nF1 by document length").unwrap();
                write!(s, "{:<10}{:>6}", "Tokens", "Docs").unwrap();
                for n in &names {
                    write!(s, "{n:>12}").unwrap();
                }
                s.push('\n');
                for bin in b {
                    let range = match bin.hi {
                        Some(h) => format!("{}-{}", bin.lo, h - 1),
                        None => format!("{}+", bin.lo),
                    };
                    write!(s, "{range:<10}{:>6}", bin.count).unwrap();
                    for f in &bin.f1 {
                        write!(s, "{:>12}", f.map_or("-".into(), |v| format!("{:.1}", v * 100.0))).unwrap();
                    }
                    s.push('\n');
                }
            }
            let sentence = |idx: usize| golds[idx].meta.sentence.clone().unwrap_or_default();
            for (i, r) in &rankings {
                writeln!(s, "\nWorst documents of {}", names[*i]).unwrap();
                for d in &r.worst {
                    writeln!(s, "{:<12}{:>7.3}  {}", d.id, d.value, sentence(d.index)).unwrap();
                }
                if *i != base {
                    writeln!(s, "\nLargest gains of {} over {baseline}", names[*i]).unwrap();
                    for d in &r.best_relative {
                        writeln!(s, "{:<12}{:>+7.3}  {}", d.id, d.value, sentence(d.index)).unwrap();
                    }
                }
            }
            s
        }
    };
    emit(None, &text)?;
    Ok(0)
}

pub fn vocab_cmd(a: &VocabArgs, g: &Global) -> Result<i32, CliError> {
    let docs = read_corpus(&a.input)?;
    let vocab = build_target_vocab(&docs, a.min_occ).map_err(data)?;
    let text = match g.format {
        Format::Json => json_text(&json!({
            "min_occ": vocab.min_occ(),
            "symbols": (0..vocab.len()).map(|i| json!({"id": i, "symbol": vocab.symbol(i), "freq": vocab.freq(i)})).collect::<Vec<_>>(),
        })),
        _ => vocab.to_text(),
    };
    emit(a.output.as_deref(), &text)?;
    Ok(0)
}
