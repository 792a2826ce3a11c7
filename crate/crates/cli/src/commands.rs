use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};

use serde::Serialize;
use xhate::corpus::{
    compute_class_weights, compute_stats, conan_records_from_json, parse_conan, parse_mlma, prepare_language,
    split_train_val, ConanFields, Corpus, DatasetStats, Language, MlmaColumns, PipelineCounts, RawMlmaRecord,
    SplitSpec, TextSample,
};
use xhate::encoding::{choose_max_seq_len, load_or_build, open_encoder, Encoder, FeatureMatrix, WhitespaceTokenizer};
use xhate::error_analysis::{
    aggregate, collect_errors, compare, render_comparison, ErrorReport, Lexicons, TaggerConfig,
};
use xhate::evaluation::{classification_report, predict_labels, render_report, EvalReport, LanguagePair, ReportFormat};
use xhate::runs::{ensure_writable, list_runs, load_run, read_grid, read_manifest, LoadedRun, RunInputs, RunManifest};
use xhate::synthetic::{synthetic_corpus, SyntheticSpec};
use xhate::training::{run_cell, run_grid, split_for_pair, CellData, GridCell, GridSpec, HyperParams};
use xhate::{Error, Result};

use crate::config::CliConfig;
use crate::{
    Cli, Command, CompareArgs, ErrorsArgs, EvalArgs, GridArgs, GridTemplateArgs, PrepareArgs, ReportArgs, StatsArgs,
    TargetArgs, TrainArgs,
};

struct Ctx {
    config: CliConfig,
    cache_dir: PathBuf,
    adapters: Option<PathBuf>,
    overwrite: bool,
}

pub fn run(cli: &Cli) -> Result<ExitCode> {
    let config = CliConfig::load(cli.config.as_deref())?;
    let ctx = Ctx {
        cache_dir: config.cache_dir(cli.cache_dir.as_deref()),
        adapters: cli.adapters_dir.clone().or_else(|| config.paths.adapters_dir.clone()),
        overwrite: cli.overwrite,
        config,
    };
    match &cli.command {
        Command::Prepare(a) => prepare(&ctx, a),
        Command::Stats(a) => stats(a),
        Command::Train(a) => train(&ctx, a),
        Command::Grid(a) => grid(&ctx, a),
        Command::GridTemplate(a) => grid_template(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Errors(a) => errors(&ctx, a),
        Command::Compare(a) => compare_cmd(&ctx, a),
        Command::Report(a) => report(&ctx, a),
    }
}

fn write_output(path: &Path, contents: &str, overwrite: bool) -> Result<()> {
    ensure_writable(path, overwrite)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn corpus_path(data_dir: &Path, lang: Language) -> PathBuf {
    data_dir.join(format!("{lang}.jsonl"))
}

fn absolute(path: &Path) -> PathBuf {
    fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf())
}

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

#[derive(Serialize)]
struct LanguageStats {
    mlma: PipelineCounts,
    conan: PipelineCounts,
    merge_duplicates: usize,
    merge_label_conflicts: usize,
    ids_renamed: usize,
    input: usize,
    after_filter: usize,
    output: usize,
    shrinkage: f64,
    dedup_shrinkage: f64,
    stats: DatasetStats,
}

fn prepare(ctx: &Ctx, a: &PrepareArgs) -> Result<ExitCode> {
    let out = ctx.config.data_dir(a.out.as_deref());
    let targets = [
        corpus_path(&out, Language::En),
        corpus_path(&out, Language::Fr),
        out.join("stats.json"),
    ];
    for t in &targets {
        ensure_writable(t, ctx.overwrite)?;
    }
    let tokenizer = WhitespaceTokenizer::default();

    let (corpora, stats): (Vec<Corpus>, serde_json::Value) = if a.synthetic {
        let spec = SyntheticSpec {
            n_per_language: a.synthetic_size,
            seed: a.seed,
            ..SyntheticSpec::default()
        };
        let corpora = Language::ALL
            .iter()
            .map(|&l| synthetic_corpus(l, &spec))
            .collect::<Result<Vec<_>>>()?;
        let mut stats = BTreeMap::new();
        for (lang, c) in Language::ALL.iter().zip(&corpora) {
            println!("{lang}: {} synthetic samples", c.len());
            stats.insert(lang.code(), compute_stats(c, &tokenizer));
        }
        (corpora, serde_json::to_value(stats)?)
    } else {
        let (records, conan, provenance) = read_sources(a)?;
        let mut corpora = Vec::new();
        let mut stats = BTreeMap::new();
        for lang in Language::ALL {
            let p = prepare_language(lang, &records, &conan, &provenance)?;
            println!(
                "{lang}: {} in, {} after filtering, {} out (shrinkage {}, dedup {})",
                p.input(),
                p.after_filter(),
                p.corpus.len(),
                pct(p.shrinkage()),
                pct(p.dedup_shrinkage())
            );
            stats.insert(
                lang.code(),
                LanguageStats {
                    input: p.input(),
                    after_filter: p.after_filter(),
                    output: p.corpus.len(),
                    shrinkage: p.shrinkage(),
                    dedup_shrinkage: p.dedup_shrinkage(),
                    stats: compute_stats(&p.corpus, &tokenizer),
                    mlma: p.mlma,
                    conan: p.conan,
                    merge_duplicates: p.merge_duplicates,
                    merge_label_conflicts: p.merge_label_conflicts,
                    ids_renamed: p.ids_renamed,
                },
            );
            corpora.push(p.corpus);
        }
        (corpora, serde_json::to_value(stats)?)
    };

    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    for (c, path) in corpora.iter().zip(&targets) {
        write_output(path, &c.to_jsonl(), ctx.overwrite)?;
    }
    write_output(&targets[2], &pretty(&stats)?, ctx.overwrite)?;
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

type Sources = (Vec<RawMlmaRecord>, Vec<TextSample>, Vec<String>);

fn read_sources(a: &PrepareArgs) -> Result<Sources> {
    if a.mlma_en.is_none() && a.mlma_fr.is_none() && a.mlma.is_empty() && a.conan.is_empty() {
        return Err(Error::Usage(
            "give at least one of --mlma-en, --mlma-fr, --mlma, --conan or use --synthetic".into(),
        ));
    }
    let filter: BTreeSet<Language> = Language::ALL.into_iter().collect();
    let mapped = a.column_map.as_deref().map(MlmaColumns::parse_mapping).transpose()?;
    let mut records = Vec::new();
    let mut provenance = Vec::new();

    let per_language = [(&a.mlma_en, Some(Language::En)), (&a.mlma_fr, Some(Language::Fr))];
    let mixed = a.mlma.iter().map(|p| (p, None));
    let files = per_language
        .into_iter()
        .filter_map(|(p, l)| p.as_ref().map(|p| (p, l)))
        .chain(mixed);
    for (path, default_language) in files {
        let columns = match (&mapped, default_language) {
            (Some(c), _) => c.clone(),
            (None, Some(_)) => MlmaColumns::default(),
            (None, None) => MlmaColumns {
                language: Some("lang".into()),
                ..MlmaColumns::default()
            },
        };
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let parsed = parse_mlma(file, &columns, &a.tag_sep, &filter, default_language)?;
        for e in &parsed.row_errors {
            eprintln!("{}: row {}: {}", path.display(), e.row, e.message);
        }
        if parsed.excluded > 0 {
            log::info!(
                "{}: {} rows in other languages skipped",
                path.display(),
                parsed.excluded
            );
        }
        records.extend(parsed.records);
        provenance.push(path.display().to_string());
    }

    let fields = a
        .field_map
        .as_deref()
        .map(ConanFields::parse_mapping)
        .transpose()?
        .unwrap_or_default();
    let mut conan = Vec::new();
    for path in &a.conan {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed = parse_conan(&conan_records_from_json(&text, &fields)?, &filter);
        for e in &parsed.row_errors {
            eprintln!("{}: record {}: {}", path.display(), e.row, e.message);
        }
        if parsed.excluded > 0 {
            log::info!(
                "{}: {} records in other languages skipped",
                path.display(),
                parsed.excluded
            );
        }
        conan.extend(parsed.samples);
        provenance.push(path.display().to_string());
    }
    Ok((records, conan, provenance))
}

fn stats(a: &StatsArgs) -> Result<ExitCode> {
    let tokenizer = WhitespaceTokenizer::default();
    let mut total = DatasetStats::default();
    for path in &a.corpus {
        total = total.combine(&compute_stats(&Corpus::load(path)?, &tokenizer));
    }
    println!("samples: {}", total.n_total);
    println!("not hateful: {}", total.n_per_class[0]);
    println!("hateful: {}", total.n_per_class[1]);
    for (lang, n) in &total.n_per_language {
        println!("{lang}: {n}");
    }
    let max_len = total.token_length_histogram.keys().next_back().copied().unwrap_or(0);
    println!("longest text: {max_len} tokens");
    let suggested = choose_max_seq_len(&total.token_length_histogram, a.min_len, a.max_len, a.coverage)?;
    println!("suggested max_seq_len ({} coverage): {suggested}", pct(a.coverage));
    match compute_class_weights(&total) {
        Ok(w) => println!("class weights: not hateful {:.4}, hateful {:.4}", w.0[0], w.0[1]),
        Err(e) => println!("class weights: unavailable ({e})"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cache_path(ctx: &Ctx, encoder: &dyn Encoder, corpus: &Corpus) -> PathBuf {
    let backbone = encoder.config().backbone_id.replace(['/', '\\'], "_");
    let fp = hex_prefix(&encoder.fingerprint());
    ctx.cache_dir
        .join(backbone)
        .join(format!("{fp}-{}.xhf", &corpus.digest()[..16]))
}

fn hex_prefix(bytes: &[u8; 32]) -> String {
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn cached_features(ctx: &Ctx, encoder: &dyn Encoder, corpus: &Corpus) -> Result<FeatureMatrix> {
    let path = cache_path(ctx, encoder, corpus);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    load_or_build(&path, corpus, encoder)
}

/// Everything needed to rebuild a run's train/val/test data.
struct DataSource<'a> {
    backbone: &'a str,
    max_seq_len: usize,
    encoder_seed: u64,
    source: &'a Path,
    target: Option<&'a Path>,
    split: SplitSpec,
}

fn build_data(ctx: &Ctx, s: &DataSource<'_>) -> Result<CellData> {
    let source = Corpus::load(s.source)?;
    let target = s.target.map(Corpus::load).transpose()?;
    let (train, val, test) = split_for_pair(&source, target.as_ref(), &s.split)?;
    let encoder = open_encoder(s.backbone, s.max_seq_len, s.encoder_seed, ctx.adapters.as_deref())?;
    let inputs = RunInputs {
        source_corpus: Some(absolute(s.source)),
        target_corpus: s.target.map(absolute),
        split: Some(s.split),
        encoder_seed: s.encoder_seed,
        ..RunInputs::default()
    };
    CellData::with_features(
        &train,
        Some(&val),
        &test,
        |c| cached_features(ctx, encoder.as_ref(), c),
        inputs,
    )
}

fn pair_paths(data_dir: &Path, pair: LanguagePair) -> (PathBuf, Option<PathBuf>) {
    let source = corpus_path(data_dir, pair.train);
    let target = (pair.test != pair.train).then(|| corpus_path(data_dir, pair.test));
    (source, target)
}

fn split_spec(ctx: &Ctx, seed: Option<u64>) -> SplitSpec {
    let mut split = ctx.config.split;
    if let Some(seed) = seed {
        split.seed = seed;
    }
    split
}

fn train(ctx: &Ctx, a: &TrainArgs) -> Result<ExitCode> {
    if let Some(path) = &a.from_manifest {
        return reproduce(ctx, path);
    }
    let hp = a.hyper.apply(&ctx.config.hyperparams);
    hp.validate()?;
    let pair = LanguagePair::new(a.train_lang, a.test_lang);
    let data_dir = ctx.config.data_dir(a.data.as_deref());
    let (source, target) = pair_paths(&data_dir, pair);
    let data = build_data(
        ctx,
        &DataSource {
            backbone: &a.backbone,
            max_seq_len: hp.max_seq_len,
            encoder_seed: ctx.config.encoder.seed,
            source: &source,
            target: target.as_deref(),
            split: split_spec(ctx, a.split_seed),
        },
    )?;
    let run_id = a.run_id.clone().unwrap_or_else(|| {
        format!(
            "{}_{}{}_e{}_lr{:e}",
            a.backbone, pair.train, pair.test, hp.epochs, hp.learning_rate
        )
    });
    let cell = GridCell {
        run_id,
        backbone_id: a.backbone.clone(),
        train_lang: pair.train,
        test_lang: pair.test,
        variant: None,
        hyperparams: hp,
    };
    println!(
        "train {}, validation {}, test {} samples",
        data.train.len(),
        data.val.as_ref().map_or(0, |v| v.len()),
        data.test.len()
    );
    let runs = ctx.config.runs_dir(a.runs.as_deref());
    let (run, report) = run_cell(&cell, &data, Some(&runs), ctx.overwrite)?;
    print!("{}", classification_report(&report));
    println!("head digest {}", run.head_digest);
    println!("wrote {}", runs.join(&cell.run_id).display());
    Ok(ExitCode::SUCCESS)
}

fn check_digest(what: &str, recorded: &str, found: &str) -> Result<()> {
    if recorded != found {
        return Err(Error::DigestMismatch {
            what: what.to_string(),
            left: recorded.to_string(),
            right: found.to_string(),
        });
    }
    Ok(())
}

fn manifest_source(m: &RunManifest) -> Result<DataSource<'_>> {
    let source = m
        .inputs
        .source_corpus
        .as_deref()
        .ok_or_else(|| Error::Data(format!("manifest of {} records no source corpus", m.run_id)))?;
    Ok(DataSource {
        backbone: &m.backbone_id,
        max_seq_len: m.hyperparams.max_seq_len,
        encoder_seed: m.inputs.encoder_seed,
        source,
        target: m.inputs.target_corpus.as_deref(),
        split: m.inputs.split.unwrap_or_default(),
    })
}

fn reproduce(ctx: &Ctx, path: &Path) -> Result<ExitCode> {
    let m = read_manifest(path)?;
    let data = build_data(ctx, &manifest_source(&m)?)?;
    let inputs = &data.inputs;
    check_digest("train split", &m.inputs.train_digest, &inputs.train_digest)?;
    check_digest("validation split", &m.inputs.val_digest, &inputs.val_digest)?;
    check_digest("test set", &m.inputs.test_digest, &inputs.test_digest)?;
    check_digest(
        "feature fingerprint",
        &m.inputs.feature_fingerprint,
        &inputs.feature_fingerprint,
    )?;
    let (run, report) = run_cell(&m.cell(), &data, None, false)?;
    check_digest("initial head", &m.initial_head_digest, &run.initial_head_digest)?;
    check_digest("trained head", &m.head_digest, &run.head_digest)?;
    println!("reproduced {}: head digest {}", m.run_id, run.head_digest);
    println!("macro-F1 {:.4}", report.macro_avg_f1);
    Ok(ExitCode::SUCCESS)
}

type DataKey = (String, usize, Language, Language);

fn grid(ctx: &Ctx, a: &GridArgs) -> Result<ExitCode> {
    let spec = read_grid(&a.grid)?;
    let data_dir = ctx.config.data_dir(a.data.as_deref());
    let runs = ctx.config.runs_dir(a.runs.as_deref());
    let split = split_spec(ctx, a.split_seed);
    // cells sharing a backbone, sequence length and pair share their data
    let shared: Mutex<HashMap<DataKey, Arc<CellData>>> = Mutex::new(HashMap::new());
    let data_for = |cell: &GridCell| -> Result<Arc<CellData>> {
        let key = (
            cell.backbone_id.clone(),
            cell.hyperparams.max_seq_len,
            cell.train_lang,
            cell.test_lang,
        );
        let mut map = shared.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(d) = map.get(&key) {
            return Ok(Arc::clone(d));
        }
        let (source, target) = pair_paths(&data_dir, cell.language_pair());
        let data = build_data(
            ctx,
            &DataSource {
                backbone: &cell.backbone_id,
                max_seq_len: cell.hyperparams.max_seq_len,
                encoder_seed: ctx.config.encoder.seed,
                source: &source,
                target: target.as_deref(),
                split,
            },
        )?;
        let data = Arc::new(data);
        map.insert(key, Arc::clone(&data));
        Ok(data)
    };
    let outcomes = run_grid(&spec, data_for, a.jobs, Some(&runs), ctx.overwrite)?;

    let width = outcomes.iter().map(|o| o.run_id.len()).max().unwrap_or(0);
    let mut failed = 0;
    let mut reports = Vec::new();
    for o in &outcomes {
        match &o.result {
            Ok((_, r)) => {
                println!("{:<width$}  complete  macro-F1 {:.4}", o.run_id, r.macro_avg_f1);
                reports.push(r.clone());
            }
            Err(e) => {
                failed += 1;
                println!("{:<width$}  failed    {e}", o.run_id);
            }
        }
    }
    if !reports.is_empty() {
        println!();
        match render_report(&reports, ReportFormat::Text) {
            Ok(t) => print!("{t}"),
            Err(e) => log::warn!("cannot build tables: {e}"),
        }
    }
    if failed > 0 {
        eprintln!("{failed} of {} cells failed", outcomes.len());
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn grid_template(ctx: &Ctx, a: &GridTemplateArgs) -> Result<ExitCode> {
    let base: HyperParams = a.hyper.apply(&ctx.config.hyperparams);
    let backbones: Vec<&str> = a.backbones.iter().map(String::as_str).collect();
    let spec = GridSpec::table_grid(&backbones, a.pair, &base);
    spec.validate()?;
    write_output(&a.out, &pretty(&spec)?, ctx.overwrite)?;
    println!("wrote {} cells to {}", spec.cells.len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

/// A corpus to score a trained run on, with its features.
struct Target {
    corpus: Corpus,
    pair: LanguagePair,
    features: FeatureMatrix,
}

fn single_language(corpus: &Corpus, path: &Path) -> Result<Language> {
    let mix = corpus.language_mix();
    match mix.keys().collect::<Vec<_>>().as_slice() {
        [only] => Ok(**only),
        _ => Err(Error::Data(format!(
            "{} must hold exactly one language, found {:?}",
            path.display(),
            mix
        ))),
    }
}

fn resolve_target(ctx: &Ctx, run: &LoadedRun, t: &TargetArgs) -> Result<Target> {
    let m = &run.manifest;
    let (corpus, pair) = match &t.corpus {
        Some(path) => {
            let corpus = Corpus::load(path)?;
            let lang = single_language(&corpus, path)?;
            (corpus, LanguagePair::new(m.language_pair.train, lang))
        }
        None => {
            let s = manifest_source(m)?;
            let source = Corpus::load(s.source)?;
            if t.val {
                let (_, val) = split_train_val(&source, &s.split)?;
                check_digest("validation split", &m.inputs.val_digest, &val.digest())?;
                let lang = m.language_pair.train;
                (val, LanguagePair::new(lang, lang))
            } else {
                let target = s.target.map(Corpus::load).transpose()?;
                let (_, _, test) = split_for_pair(&source, target.as_ref(), &s.split)?;
                check_digest("test set", &m.inputs.test_digest, &test.digest())?;
                (test, m.language_pair)
            }
        }
    };
    let encoder = open_encoder(
        &m.backbone_id,
        m.hyperparams.max_seq_len,
        m.inputs.encoder_seed,
        ctx.adapters.as_deref(),
    )?;
    let features = cached_features(ctx, encoder.as_ref(), &corpus)?;
    check_digest(
        "feature fingerprint",
        &m.inputs.feature_fingerprint,
        &features.fingerprint_hex(),
    )?;
    Ok(Target { corpus, pair, features })
}

fn eval(ctx: &Ctx, a: &EvalArgs) -> Result<ExitCode> {
    let run = load_run(&a.target.run)?;
    let target = resolve_target(ctx, &run, &a.target)?;
    let m = &run.manifest;
    let predicted = predict_labels(&run.params, &run.spec, &target.features)?;
    let report = EvalReport::from_labels(&target.corpus.labels(), &predicted, target.pair, &m.run_id)?
        .with_labels(&m.backbone_id, &m.variant);
    match a.format {
        ReportFormat::Text => print!("{}", classification_report(&report)),
        ReportFormat::Json => print!("{}", report.to_json()),
        ReportFormat::Markdown => print!(
            "{}",
            render_report(std::slice::from_ref(&report), ReportFormat::Markdown)?
        ),
    }
    if let Some(out) = &a.out {
        write_output(out, &report.to_json(), ctx.overwrite)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn errors(ctx: &Ctx, a: &ErrorsArgs) -> Result<ExitCode> {
    let run = load_run(&a.target.run)?;
    let target = resolve_target(ctx, &run, &a.target)?;
    let lexicons = match a.lexicons.as_ref().or(ctx.config.paths.lexicon_dir.as_ref()) {
        Some(dir) => Lexicons::load_dir(dir)?,
        None => Lexicons::builtin(),
    };
    let tagger = TaggerConfig {
        short_below: a.short_below,
        long_at_least: a.long_at_least,
        ..TaggerConfig::default()
    };
    let predicted = predict_labels(&run.params, &run.spec, &target.features)?;
    let records = collect_errors(&target.corpus, &predicted, &lexicons, &tagger)?;
    let report = aggregate(
        &run.manifest.run_id,
        &target.corpus.digest(),
        target.corpus.len(),
        &records,
    );
    print!("{}", report.render());
    if let Some(out) = &a.out {
        write_output(out, &report.to_json(), ctx.overwrite)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn read_error_report(path: &Path) -> Result<ErrorReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn compare_cmd(ctx: &Ctx, a: &CompareArgs) -> Result<ExitCode> {
    let c = compare(&read_error_report(&a.a)?, &read_error_report(&a.b)?)?;
    match a.format {
        ReportFormat::Json => print!("{}", c.to_json()),
        _ => print!("{}", render_comparison(&c)),
    }
    if let Some(out) = &a.out {
        write_output(out, &c.to_json(), ctx.overwrite)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn report(ctx: &Ctx, a: &ReportArgs) -> Result<ExitCode> {
    let root = ctx.config.runs_dir(a.runs.as_deref());
    let mut reports = Vec::new();
    for dir in list_runs(&root)? {
        match load_run(&dir) {
            Ok(run) => reports.push(run.report),
            Err(e @ Error::DigestMismatch { .. }) => return Err(e),
            Err(e) => log::warn!("skipping {}: {e}", dir.display()),
        }
    }
    if reports.is_empty() {
        return Err(Error::Data(format!("no completed runs under {}", root.display())));
    }
    let text = render_report(&reports, a.format)?;
    match &a.out {
        Some(out) => {
            write_output(out, &text, ctx.overwrite)?;
            println!("wrote {}", out.display());
        }
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}
