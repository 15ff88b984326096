use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rxnctx_core::analysis::{entropy_report, grid_for_position, write_grid_csv, EntropyBase, GRID_SENTINEL};
use rxnctx_core::config::{RunMeta, TOOL_VERSION};
use rxnctx_core::encoders::{EncoderConfig, EncoderKind};
use rxnctx_core::finetune::{
    self, read_pair_csv, read_reaction_csv, read_regression_csv, FinetuneConfig, Sample, TaskKind,
};
use rxnctx_core::numerics::{load_checkpoint, save_checkpoint, ParameterStore, Precision, Real};
use rxnctx_core::pretrain::{prepare_corpus, pretrain_run, PreparedExample, PretrainConfig, PretrainModel};
use rxnctx_core::reaction::{
    detect_reaction_centre, extract_examples, load_corpus, parse_reaction, process_corpus, CorpusOptions,
    ProcessedCorpus, RejectReason, Rejection,
};
use rxnctx_core::vocab::{token_distribution, TokenDistribution, TokenScheme, Vocabulary};
use serde::{Deserialize, Serialize};

use crate::artifacts::{
    config_or_default, ensure_parent, read_input, require_file, with_run, write_json, write_lines, write_meta_sidecar,
    write_rejected,
};
use crate::error::{checkpoint_error, invalid, runtime, CliResult};
use crate::{EntropyArgs, FinetuneArgs, GridArgs, Io, PretrainArgs, Restrict, StatsArgs};

/// Config shared by the corpus-reading commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusConfig {
    #[serde(default)]
    corpus: CorpusOptions,
    #[serde(default)]
    tokens: TokenScheme,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntropyConfig {
    #[serde(default)]
    base: EntropyBase,
    #[serde(default)]
    corpus: CorpusOptions,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridConfig {
    #[serde(default)]
    example: usize,
    #[serde(default)]
    position: usize,
    #[serde(default)]
    corpus: CorpusOptions,
    #[serde(default)]
    seed: u64,
}

fn corpus_config(io: &Io) -> CliResult<CorpusConfig> {
    let mut cfg: CorpusConfig = config_or_default(io.config.as_deref())?;
    if let Some(s) = io.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn processed(input: &Path, opts: &CorpusOptions) -> CliResult<ProcessedCorpus> {
    let text = read_input(input)?;
    let corpus = process_corpus(&text, opts);
    write_rejected(input, &corpus.rejected)?;
    log::info!("{} reactions accepted, {} rejected", corpus.entries.len(), corpus.rejected.len());
    Ok(corpus)
}

fn reactant_graphs(corpus: &ProcessedCorpus) -> Vec<rxnctx_core::chemgraph::MolecularGraph> {
    corpus.entries.iter().flat_map(|e| e.record.reactants.iter().cloned()).collect()
}

fn save_vocab(path: &Path, vocab: &Vocabulary, meta: &RunMeta) -> CliResult<()> {
    let v: serde_json::Value = serde_json::from_str(&vocab.to_json())?;
    write_json(path, &with_run(&v, meta)?)
}

fn load_vocab(path: &Path) -> CliResult<Vocabulary> {
    require_file(path, "vocabulary")?;
    Ok(Vocabulary::load(path)?)
}

pub fn ingest(io: &Io) -> CliResult<()> {
    let cfg = corpus_config(io)?;
    let meta = RunMeta::new(&cfg, cfg.seed);
    let corpus = processed(&io.input, &cfg.corpus)?;
    let lines = corpus.entries.iter().map(|e| {
        serde_json::json!({
            "source_line_no": e.line_no,
            "reaction": e.record.source_line,
            "centre_atoms": e.centre.centre_atoms,
        })
        .to_string()
    });
    write_lines(&io.out, lines, &meta)?;
    println!("{} accepted, {} rejected", corpus.entries.len(), corpus.rejected.len());
    Ok(())
}

pub fn detect_centres(io: &Io) -> CliResult<()> {
    let cfg = corpus_config(io)?;
    let meta = RunMeta::new(&cfg, cfg.seed);
    let text = read_input(&io.input)?;
    let mut lines = Vec::new();
    let mut rejected = Vec::new();
    for (line_no, line) in load_corpus(&text) {
        match parse_reaction(line).and_then(|r| detect_reaction_centre(&r)) {
            Ok(c) => lines.push(serde_json::json!({ "source_line_no": line_no, "pairs": c.pairs }).to_string()),
            Err(e) => rejected.push(Rejection {
                line_no,
                reason: RejectReason::from(&e),
                message: e.to_string(),
                line: line.to_string(),
            }),
        }
    }
    write_rejected(&io.input, &rejected)?;
    println!("{} centres written, {} lines rejected", lines.len(), rejected.len());
    write_lines(&io.out, lines, &meta)
}

pub fn build_vocab(io: &Io) -> CliResult<()> {
    let cfg = corpus_config(io)?;
    let meta = RunMeta::new(&cfg, cfg.seed);
    let corpus = processed(&io.input, &cfg.corpus)?;
    let vocab = Vocabulary::build(&reactant_graphs(&corpus), cfg.tokens)?;
    save_vocab(&io.out, &vocab, &meta)?;
    println!("{} tokens (including UNK), fingerprint {}", vocab.len(), vocab.fingerprint());
    Ok(())
}

pub fn stats(a: &StatsArgs) -> CliResult<()> {
    let cfg = corpus_config(&a.io)?;
    let meta = RunMeta::new(
        &serde_json::json!({ "config": cfg, "restrict": format!("{:?}", a.restrict).to_lowercase() }),
        cfg.seed,
    );
    let corpus = processed(&a.io.input, &cfg.corpus)?;
    let graphs = reactant_graphs(&corpus);
    let vocab = match &a.vocab {
        Some(p) => load_vocab(p)?,
        None => Vocabulary::build(&graphs, cfg.tokens)?,
    };
    let dist = match a.restrict {
        Restrict::All => token_distribution(&graphs, &vocab),
        Restrict::Centres => {
            let tokens: Vec<_> = corpus
                .entries
                .iter()
                .flat_map(|e| extract_examples(&e.record, &e.centre, &vocab))
                .flat_map(|x| x.mrcr_targets)
                .collect();
            TokenDistribution::from_tokens(&vocab, &tokens)
        }
    };
    ensure_parent(&a.io.out)?;
    dist.write_csv(BufWriter::new(File::create(&a.io.out)?)).map_err(runtime)?;
    write_meta_sidecar(&a.io.out, &meta)?;
    println!("{} atoms, {} distinct tokens", dist.total, dist.rows.len());
    Ok(())
}

struct Pretrained<F> {
    model: PretrainModel,
    store: ParameterStore<F>,
    fingerprint: Option<String>,
}

fn load_pretrained<F: Real>(path: &Path) -> CliResult<Pretrained<F>> {
    require_file(path, "checkpoint")?;
    let ck = load_checkpoint::<F>(path).map_err(|e| checkpoint_error(path, e))?;
    let model: PretrainModel = serde_json::from_value(ck.manifest.meta["model"].clone()).map_err(|e| {
        invalid(format!("checkpoint {} does not describe a pre-training model ({e})", path.display()))
    })?;
    let fingerprint = ck.manifest.meta["vocab_fingerprint"].as_str().map(String::from);
    Ok(Pretrained {
        model,
        store: ck.store,
        fingerprint,
    })
}

fn beside(ckpt: &Path, name: &str) -> PathBuf {
    ckpt.with_file_name(name)
}

fn check_vocab<F>(vocab: &Vocabulary, p: &Pretrained<F>, ckpt: &Path) -> CliResult<()> {
    let fp = vocab.fingerprint();
    if p.fingerprint.as_deref().is_some_and(|c| c != fp) || p.model.vocab_size != vocab.len() {
        return Err(invalid(format!(
            "vocabulary (fingerprint {fp}, {} tokens) does not match checkpoint {} (fingerprint {}, {} tokens); pass the vocab.json written with that checkpoint",
            vocab.len(),
            ckpt.display(),
            p.fingerprint.as_deref().unwrap_or("unknown"),
            p.model.vocab_size
        )));
    }
    Ok(())
}

pub fn pretrain(a: &PretrainArgs) -> CliResult<()> {
    let mut cfg: PretrainConfig = config_or_default(a.io.config.as_deref())?;
    if let Some(s) = a.io.seed {
        cfg.seed = s;
    }
    if let Some(o) = a.objective {
        cfg.objective = o.into();
    }
    if let Some(e) = a.encoder {
        cfg.encoder.kind = e.into();
    }
    if let Some(n) = a.epochs {
        cfg.epochs = n;
    }
    cfg.validate()?;
    if let Some(p) = &a.init_checkpoint {
        require_file(p, "init checkpoint")?;
    }
    let corpus = processed(&a.io.input, &cfg.corpus)?;
    let vocab_path = a
        .vocab
        .clone()
        .or_else(|| a.init_checkpoint.as_ref().map(|p| beside(p, "vocab.json")).filter(|p| p.is_file()));
    let vocab = match &vocab_path {
        Some(p) => load_vocab(p)?,
        None => Vocabulary::build(&reactant_graphs(&corpus), TokenScheme::default())?,
    };
    let examples = prepare_corpus(&corpus, &vocab);
    let meta = RunMeta::new(&cfg, cfg.seed);
    fs::create_dir_all(&a.io.out)?;
    save_vocab(&a.io.out.join("vocab.json"), &vocab, &meta)?;
    let summary = match cfg.precision {
        Precision::F32 => run_pretrain::<f32>(&cfg, &examples, &vocab, a, &meta)?,
        Precision::F64 => run_pretrain::<f64>(&cfg, &examples, &vocab, a, &meta)?,
    };
    write_meta_sidecar(&a.io.out.join("metrics.jsonl"), &meta)?;
    println!("{summary}");
    Ok(())
}

fn run_pretrain<F: Real>(
    cfg: &PretrainConfig,
    examples: &[PreparedExample],
    vocab: &Vocabulary,
    a: &PretrainArgs,
    meta: &RunMeta,
) -> CliResult<String> {
    let init = match &a.init_checkpoint {
        Some(p) => {
            let pre = load_pretrained::<F>(p)?;
            check_vocab(vocab, &pre, p)?;
            if pre.model.encoder != cfg.encoder {
                return Err(invalid(format!(
                    "checkpoint {} was trained with a different encoder configuration; use the same encoder settings to continue",
                    p.display()
                )));
            }
            Some(pre.store)
        }
        None => None,
    };
    let out = pretrain_run::<F>(cfg, examples, vocab, init.as_ref(), Some(&a.io.out), meta.to_value())?;
    let last = out.metrics.last().expect("epoch 0 is always logged");
    Ok(format!(
        "{} examples ({} train, {} val), {} epochs, final loss {:.6}",
        examples.len(),
        out.train.len(),
        out.val.len(),
        cfg.epochs,
        last.loss
    ))
}

fn samples_for(task: TaskKind, text: &str) -> CliResult<Vec<Sample>> {
    Ok(match task {
        TaskKind::Regression => read_regression_csv(text.as_bytes())?.iter().map(Sample::molecule).collect(),
        TaskKind::Pair => read_pair_csv(text.as_bytes())?.iter().map(Sample::pair).collect(),
        TaskKind::ReactionType => read_reaction_csv(text.as_bytes())?.iter().map(Sample::reaction).collect(),
    })
}

pub fn finetune(task: TaskKind, a: &FinetuneArgs) -> CliResult<()> {
    let mut cfg: FinetuneConfig = config_or_default(a.io.config.as_deref())?;
    if let Some(s) = a.io.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.epochs {
        cfg.epochs = n;
    }
    cfg.validate(task)?;
    let flag_kind: Option<EncoderKind> = a.encoder.map(Into::into);
    let init = match &a.init_checkpoint {
        Some(p) => Some(load_pretrained::<f64>(p)?),
        None => None,
    };
    let encoder = match &init {
        Some(pre) => {
            if flag_kind.is_some_and(|k| k != pre.model.encoder.kind) {
                return Err(invalid(format!(
                    "--encoder conflicts with the {} encoder stored in the checkpoint",
                    pre.model.encoder.kind
                )));
            }
            pre.model.encoder.clone()
        }
        None => {
            // Reaction inputs need the graphormer's two virtual nodes.
            let mut e = cfg.encoder.clone().unwrap_or_else(|| match task {
                TaskKind::ReactionType => EncoderConfig::for_kind(EncoderKind::Graphormer),
                _ => EncoderConfig::gin_desk(),
            });
            if let Some(k) = flag_kind {
                e.kind = k;
            }
            e
        }
    };
    let text = read_input(&a.io.input)?;
    let samples = samples_for(task, &text)?;
    let out = finetune::finetune::<f64>(task, &cfg, &encoder, &samples, init.as_ref().map(|p| &p.store))?;
    let meta = RunMeta {
        tool_version: TOOL_VERSION.to_string(),
        config_hash: out.report.config_hash.clone(),
        seed: cfg.seed,
    };
    fs::create_dir_all(&a.io.out)?;
    write_json(&a.io.out.join("report.json"), &with_run(&out.report, &meta)?)?;
    write_lines(
        &a.io.out.join("history.jsonl"),
        out.history.iter().map(|h| serde_json::to_string(h).expect("history serializes")),
        &meta,
    )?;
    save_checkpoint(
        &a.io.out.join("checkpoint.json"),
        &out.store,
        false,
        serde_json::json!({ "task": task, "finetune_model": out.model, "run": meta }),
    )
    .map_err(runtime)?;
    let shown: Vec<String> = out
        .report
        .metrics
        .iter()
        .filter_map(|(k, v)| {
            v.map(|v| match v.fract() == 0.0 {
                true => format!("{k}={v}"),
                false => format!("{k}={v:.4}"),
            })
        })
        .collect();
    println!("{task} ({} split): {}", out.report.eval_split, shown.join(" "));
    Ok(())
}

fn analysis_vocab<F>(explicit: Option<&Path>, ckpt: &Path, checked: &[(&Pretrained<F>, &Path)]) -> CliResult<Vocabulary> {
    let path = explicit.map(Path::to_path_buf).unwrap_or_else(|| beside(ckpt, "vocab.json"));
    let vocab = load_vocab(&path)?;
    for (p, path) in checked {
        check_vocab(&vocab, p, path)?;
    }
    Ok(vocab)
}

pub fn entropy(a: &EntropyArgs) -> CliResult<()> {
    let mut cfg: EntropyConfig = config_or_default(a.io.config.as_deref())?;
    if let Some(s) = a.io.seed {
        cfg.seed = s;
    }
    let meta = RunMeta::new(&cfg, cfg.seed);
    let p = load_pretrained::<f64>(&a.conditional)?;
    let q = load_pretrained::<f64>(&a.unconditional)?;
    if !p.model.use_context {
        log::warn!("the conditional checkpoint was trained without context");
    }
    let vocab = analysis_vocab(
        a.vocab.as_deref(),
        &a.conditional,
        &[(&p, a.conditional.as_path()), (&q, a.unconditional.as_path())],
    )?;
    let corpus = processed(&a.io.input, &cfg.corpus)?;
    let examples = prepare_corpus(&corpus, &vocab);
    if examples.is_empty() {
        return Err(invalid(format!("{} yields no masked positions", a.io.input.display())));
    }
    let refs: Vec<&PreparedExample> = examples.iter().collect();
    let report = entropy_report((&p.model, &p.store), (&q.model, &q.store), &refs, cfg.base)?;
    fs::create_dir_all(&a.io.out)?;
    write_json(&a.io.out.join("entropy.json"), &with_run(&report, &meta)?)?;
    let hist = a.io.out.join("histogram.csv");
    report.write_histogram_csv(File::create(&hist)?).map_err(runtime)?;
    write_meta_sidecar(&hist, &meta)?;
    println!(
        "{} positions: mean entropy conditional {:.4} bits, context-free {:.4} bits",
        report.positions, report.mean_p_bits, report.mean_q_bits
    );
    Ok(())
}

pub fn export_grid(a: &GridArgs) -> CliResult<()> {
    let mut cfg: GridConfig = config_or_default(a.io.config.as_deref())?;
    if let Some(s) = a.io.seed {
        cfg.seed = s;
    }
    if let Some(k) = a.example {
        cfg.example = k;
    }
    if let Some(k) = a.position {
        cfg.position = k;
    }
    let meta = RunMeta::new(&cfg, cfg.seed);
    let pre = load_pretrained::<f64>(&a.checkpoint)?;
    let vocab = analysis_vocab(a.vocab.as_deref(), &a.checkpoint, &[(&pre, a.checkpoint.as_path())])?;
    let corpus = processed(&a.io.input, &cfg.corpus)?;
    let examples = prepare_corpus(&corpus, &vocab);
    let ex = examples.get(cfg.example).ok_or_else(|| {
        invalid(format!("example {} out of range: the corpus yields {} examples", cfg.example, examples.len()))
    })?;
    let grid = grid_for_position(&pre.model, &pre.store, ex, cfg.position)?;
    ensure_parent(&a.io.out)?;
    write_grid_csv(&grid, File::create(&a.io.out)?).map_err(runtime)?;
    let side = grid.sidecar();
    let sidecar = serde_json::json!({
        "target_row": side.target_row,
        "target_col": side.target_col,
        "target_index": side.target_index,
        "target_token": vocab.label(side.target_index),
        "side": side.side,
        "vocab_size": side.vocab_size,
        "padding": GRID_SENTINEL,
        "grid": a.io.out.file_name().and_then(|n| n.to_str()),
        "run": meta,
    });
    write_json(&a.io.out.with_extension("json"), &sidecar)?;
    println!(
        "{}x{} grid, target {} at row {} col {}",
        side.side,
        side.side,
        vocab.label(side.target_index),
        side.target_row,
        side.target_col
    );
    Ok(())
}
