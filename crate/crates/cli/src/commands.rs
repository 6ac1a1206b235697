use std::io::{BufRead, Write};
use std::path::Path;

use univec_core::corpus::{normalize, Direction, LanguageId, ParallelCorpus};
use univec_core::evaluation::{evaluate_corpus, export_attention, AttentionMap, BleuConfig};
use univec_core::model::translate as translate_text;
use univec_core::numcore::Real;
use univec_core::training::{
    atomic_write, read_manifest, Checkpoint, Manifest, Precision, TrainConfig, TrainConfigPatch,
    Trainer,
};

use crate::args::{AttentionArgs, DirectionArg, EvaluateArgs, TrainArgs, TranslateArgs};
use crate::{usage, CliError};

type CmdResult = Result<(), CliError>;

pub const HISTORY_FILE: &str = "loss_history.csv";

fn language(code: &str, flag: &str) -> Result<LanguageId, CliError> {
    LanguageId::new(code).map_err(|e| usage(format!("{flag}: {e}")))
}

fn language_pair(from: &str, to: &str) -> Result<(LanguageId, LanguageId), CliError> {
    let from = language(from, "--from")?;
    let to = language(to, "--to")?;
    if from == to {
        return Err(usage(format!("--from and --to are both `{from}`")));
    }
    Ok((from, to))
}

fn check_max_len(max_len: usize) -> CmdResult {
    if max_len < 3 {
        return Err(usage(format!("--max-len must be at least 3, got {max_len}")));
    }
    Ok(())
}

fn model_languages(manifest: &Manifest, langs: &[&LanguageId]) -> CmdResult {
    for lang in langs {
        if !manifest.languages.contains(lang) {
            return Err(usage(format!("model has no language `{lang}`")));
        }
    }
    Ok(())
}

// ---- train ----

/// Default config, then the config file, then explicit flags.
pub fn resolve_config(a: &TrainArgs) -> Result<TrainConfig, CliError> {
    let mut config = TrainConfig::default();
    if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("--config {}: {e}", path.display())))?;
        let patch: TrainConfigPatch = serde_json::from_str(&text)
            .map_err(|e| usage(format!("--config {}: {e}", path.display())))?;
        config.apply(&patch);
    }
    let precision = a
        .precision
        .map(Precision::try_from)
        .transpose()
        .map_err(|e| usage(format!("--precision: {e}")))?;
    config.apply(&TrainConfigPatch {
        epochs: a.epochs,
        batch_size: a.batch,
        d_e: a.embed,
        d_h: a.hidden,
        alpha: a.lr,
        gamma: a.decay,
        seed: a.seed,
        max_len: a.max_len,
        precision,
        subset: a.subset.map(Some),
        ..TrainConfigPatch::default()
    });
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

pub fn train(a: &TrainArgs, stdout: &mut dyn Write) -> CmdResult {
    let lang_a = language(&a.lang_a, "--lang-a")?;
    let lang_b = language(&a.lang_b, "--lang-b")?;
    if lang_a == lang_b {
        return Err(usage(format!("--lang-a and --lang-b are both `{lang_a}`")));
    }
    let config = resolve_config(a)?;
    if a.out.is_file() {
        return Err(usage(format!("--out {} is a file", a.out.display())));
    }
    let (corpus, report) = ParallelCorpus::load_tsv(&a.data, lang_a, lang_b)?;
    if report.skipped_lines > 0 {
        log::warn!("skipped {} malformed lines", report.skipped_lines);
    }
    match config.precision {
        Precision::F32 => train_with::<f32>(&config, &corpus, &a.out, stdout),
        Precision::F64 => train_with::<f64>(&config, &corpus, &a.out, stdout),
    }
}

fn flush<F: Real>(trainer: &Trainer<F>, dir: &Path) -> univec_core::Result<()> {
    trainer.checkpoint().save(dir)?;
    trainer.history().write_csv(dir.join(HISTORY_FILE))
}

fn train_with<F: Real>(
    config: &TrainConfig,
    corpus: &ParallelCorpus,
    dir: &Path,
    stdout: &mut dyn Write,
) -> CmdResult {
    let mut trainer = Trainer::<F>::new(config, corpus)?;
    log::info!("training on {} pairs", trainer.pair_count());
    flush(&trainer, dir)?;
    trainer.run(|t, _| flush(t, dir))?;
    match trainer.history().records.last() {
        Some(last) => writeln!(stdout, "final loss {:.6}", last.loss)?,
        None => writeln!(stdout, "final loss n/a (0 epochs)")?,
    }
    Ok(())
}

// ---- translate ----

fn load<F: Real>(dir: &Path) -> Result<Checkpoint<F>, CliError> {
    Ok(Checkpoint::<F>::load(dir)?)
}

pub fn translate(a: &TranslateArgs, stdin: &mut dyn BufRead, stdout: &mut dyn Write) -> CmdResult {
    let (from, to) = language_pair(&a.from, &a.to)?;
    check_max_len(a.max_len)?;
    let manifest = read_manifest(&a.model)?;
    model_languages(&manifest, &[&from, &to])?;
    let lines: Vec<String> = match &a.text {
        Some(t) => vec![t.clone()],
        None => stdin.lines().collect::<std::io::Result<_>>()?,
    };
    match manifest.precision {
        Precision::F32 => translate_with(&load::<f32>(&a.model)?, &from, &to, &lines, a.max_len, stdout),
        Precision::F64 => translate_with(&load::<f64>(&a.model)?, &from, &to, &lines, a.max_len, stdout),
    }
}

fn translate_with<F: Real>(
    ck: &Checkpoint<F>,
    from: &LanguageId,
    to: &LanguageId,
    lines: &[String],
    max_len: usize,
    stdout: &mut dyn Write,
) -> CmdResult {
    let (src, tgt) = (ck.vocab(from)?, ck.vocab(to)?);
    for line in lines {
        let t = translate_text(&ck.model, src, tgt, line, max_len)?;
        writeln!(stdout, "{}", t.text)?;
    }
    Ok(())
}

// ---- evaluate ----

pub fn evaluate(a: &EvaluateArgs, stdout: &mut dyn Write) -> CmdResult {
    if a.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    if a.out.as_deref().is_some_and(Path::is_dir) {
        return Err(usage("--out is a directory"));
    }
    let manifest = read_manifest(&a.model)?;
    let [lang_a, lang_b] = <[LanguageId; 2]>::try_from(manifest.languages.clone())
        .map_err(|_| usage("evaluate needs a two-language model"))?;
    let (mut corpus, _) = ParallelCorpus::load_tsv(&a.data, lang_a, lang_b)?;
    let dropped = corpus.retain_max_len(manifest.config.max_len)?;
    if dropped > 0 {
        log::warn!("skipped {dropped} pairs longer than {} ids", manifest.config.max_len);
    }
    let direction = match a.direction {
        DirectionArg::A2b => Direction::AToB,
        DirectionArg::B2a => Direction::BToA,
    };
    let bleu = BleuConfig::with_order(a.n);
    let report = match manifest.precision {
        Precision::F32 => evaluate_corpus(&load::<f32>(&a.model)?, &corpus, direction, &bleu, a.oracle)?,
        Precision::F64 => evaluate_corpus(&load::<f64>(&a.model)?, &corpus, direction, &bleu, a.oracle)?,
    };
    if let Some(out) = &a.out {
        let json = serde_json::json!({
            "mean_bleu": report.mean_bleu,
            "reports": report.sentences.iter().map(|s| &s.report).collect::<Vec<_>>(),
            "sentences": report.sentences,
        });
        let text = serde_json::to_string_pretty(&json)? + "\n";
        atomic_write(out, text.as_bytes())?;
    }
    writeln!(stdout, "mean BLEU {}", report.mean_bleu)?;
    Ok(())
}

// ---- attention ----

pub fn attention(a: &AttentionArgs, stdout: &mut dyn Write) -> CmdResult {
    if normalize(&a.text).is_empty() {
        return Err(usage("--text is empty"));
    }
    let (from, to) = language_pair(&a.from, &a.to)?;
    check_max_len(a.max_len)?;
    if a.out.is_dir() {
        return Err(usage("--out is a directory"));
    }
    let manifest = read_manifest(&a.model)?;
    model_languages(&manifest, &[&from, &to])?;
    let map = match manifest.precision {
        Precision::F32 => attention_map(&load::<f32>(&a.model)?, &from, &to, &a.text, a.max_len)?,
        Precision::F64 => attention_map(&load::<f64>(&a.model)?, &from, &to, &a.text, a.max_len)?,
    };
    export_attention(&map, &a.out)?;
    writeln!(
        stdout,
        "{} x {} attention map written to {}",
        map.target_tokens.len(),
        map.source_tokens.len(),
        a.out.display()
    )?;
    Ok(())
}

fn attention_map<F: Real>(
    ck: &Checkpoint<F>,
    from: &LanguageId,
    to: &LanguageId,
    text: &str,
    max_len: usize,
) -> Result<AttentionMap, CliError> {
    let t = translate_text(&ck.model, ck.vocab(from)?, ck.vocab(to)?, text, max_len)?;
    Ok(AttentionMap::new(t.source_tokens, t.target_tokens, t.attention)?)
}
