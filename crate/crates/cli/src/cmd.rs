use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use sktkit::backend::{predict_batch, BackendError, PredictionRequest};
use sktkit::conllu::{apply_manifest, make_splits, write_conllu, SplitManifest};
use sktkit::deplin::{delinearize, linearize, write_dep_samples, DepFeatures, DepSampleConfig, RepairReport};
use sktkit::sandhi::RuleTable;
use sktkit::synthetic::{generate, GenConfig};
use sktkit::tagcodec::{compression_stats, scan_reserved, tag_frequencies, Codebook, DEFAULT_ALPHABET};
use sktkit::taskgen::{augment_dep_training, generate_samples, make_ocr_sample_truncated, mask_mantras, paragraph_ranges, read_samples, write_samples, TaskSpec, OCR_MAX_CHARS};
use sktkit::translit::{Script, Transliterator};
use sktkit::{validate_tree, MorphTag, Sentence, Task, TaskSet};

use crate::config::RunConfig;
use crate::io::{create_output, load_corpus, open_input, require_existing};
use crate::{Cli, Command, CorpusArgs, DepOp, FeatureArg, MakeSamples, MakeSplits, Predict, SandhiOp, UsageError};

mod evaluate;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    cfg.jobs = cfg.jobs.max(1);
    match cli.command {
        Command::Ingest { corpus, out, stats, preserve_special } => ingest(&cfg, &corpus, out.output.as_deref(), stats.as_deref(), preserve_special),
        Command::Translit { from, to, text } => translit(&from, &to, &text),
        Command::BuildCodebook { corpus, out, alphabet } => build_codebook(&cfg, &corpus, out.output.as_deref(), &alphabet),
        Command::EncodeTags { codebook, input } => map_tags(&cfg, codebook, input.as_deref(), true),
        Command::DecodeTags { codebook, input } => map_tags(&cfg, codebook, input.as_deref(), false),
        Command::Sandhi { rules, op } => sandhi(rules.or(cfg.paths.rules.clone()).as_deref(), op),
        Command::MakeSamples(args) => make_samples(&cfg, args),
        Command::MakeParagraphs { corpus, out, budget } => make_paragraphs(&cfg, &corpus, out.output.as_deref(), budget),
        Command::MakeSplits(args) => splits(&cfg, args),
        Command::Dep { op } => dep(&cfg, op),
        Command::Predict(args) => predict(&cfg, args),
        Command::Evaluate(args) => evaluate::run(args),
        Command::GenCorpus { out, texts, min_sentences, max_sentences } => {
            if min_sentences == 0 || min_sentences > max_sentences {
                return Err(usage("need 0 < --min-sentences <= --max-sentences"));
            }
            let corpus = generate(&GenConfig { texts, sentences_per_text: (min_sentences, max_sentences), seed: cfg.seed, ..Default::default() });
            let mut w = create_output(out.output.as_deref())?;
            writeln!(w, "# sktkit gen-corpus texts={texts} sentences={} seed={}\n", corpus.len(), cfg.seed)?;
            write_conllu(&mut w, &corpus, &cfg.conllu)?;
            w.flush()?;
            Ok(())
        }
    }
}

fn corpus<'a>(cfg: &'a RunConfig, args: &'a CorpusArgs) -> &'a [PathBuf] {
    if args.corpus.is_empty() {
        &cfg.paths.corpus
    } else {
        &args.corpus
    }
}

fn read_corpus(cfg: &RunConfig, args: &CorpusArgs) -> Result<Vec<Sentence>> {
    let (sentences, stats) = load_corpus(corpus(cfg, args), &cfg.conllu)?;
    if stats.skipped_multiword + stats.skipped_empty_nodes > 0 {
        log::info!("skipped {} multiword-token and {} empty-node lines", stats.skipped_multiword, stats.skipped_empty_nodes);
    }
    Ok(sentences)
}

fn load_codebook(path: Option<&Path>) -> Result<Codebook> {
    let path = path.ok_or_else(|| usage("no codebook given (--codebook or paths.codebook in the config)"))?;
    Codebook::read(open_input(Some(path))?).with_context(|| format!("reading codebook {}", path.display()))
}

#[derive(Default)]
struct CategoryStats {
    texts: BTreeSet<String>,
    sentences: usize,
    tokens: usize,
    chars: usize,
    reconstructed: usize,
    mantras: usize,
}

fn ingest(cfg: &RunConfig, args: &CorpusArgs, out: Option<&Path>, stats_out: Option<&Path>, preserve: bool) -> Result<()> {
    let mut opts = cfg.conllu.clone();
    opts.preserve_special |= preserve;
    let (sentences, read) = load_corpus(corpus(cfg, args), &opts)?;
    let mut cats: BTreeMap<String, CategoryStats> = BTreeMap::new();
    let mut total = CategoryStats::default();
    let mut bad_trees = 0;
    let mut unparsed = 0;
    for s in &sentences {
        if s.tokens.iter().all(|t| t.head.is_some()) {
            if !validate_tree(s).passes() {
                bad_trees += 1;
            }
        } else {
            unparsed += 1;
        }
        let rec = s.tokens.iter().filter(|t| t.reconstructed).count();
        for c in [cats.entry(s.category.clone().unwrap_or_else(|| "unknown".into())).or_default(), &mut total] {
            c.texts.insert(s.text_id.clone());
            c.sentences += 1;
            c.tokens += s.tokens.len();
            c.chars += s.char_len();
            c.reconstructed += rec;
            c.mantras += s.is_mantra as usize;
        }
    }
    let scan = scan_reserved(&sentences, DEFAULT_ALPHABET);
    let translit = Transliterator::builtin();
    let non_iast = sentences.iter().filter(|s| translit.transliterate(&s.raw_text, Script::Iast, Script::Slp1).is_err()).count();
    if non_iast > 0 {
        log::warn!("{non_iast} sentences contain characters outside IAST; kept as they are");
    }

    let mut w = create_output(out)?;
    writeln!(w, "# sktkit ingest sentences={} tokens={} seed={}", read.sentences, read.tokens, cfg.seed)?;
    writeln!(w)?;
    write_conllu(&mut w, &sentences, &opts)?;
    w.flush()?;

    let mut st: Box<dyn Write> = match stats_out {
        Some(p) => create_output(Some(p))?,
        None => Box::new(std::io::stderr()),
    };
    writeln!(st, "# category\ttexts\tsentences\ttokens\tcharacters\treconstructed_tokens\tmantra_sentences")?;
    for (name, c) in cats.iter().chain(std::iter::once((&"TOTAL".to_string(), &total))) {
        writeln!(st, "{name}\t{}\t{}\t{}\t{}\t{}\t{}", c.texts.len(), c.sentences, c.tokens, c.chars, c.reconstructed, c.mantras)?;
    }
    writeln!(st, "# skipped multiword-token lines: {}", read.skipped_multiword)?;
    writeln!(st, "# skipped empty-node lines: {}", read.skipped_empty_nodes)?;
    writeln!(st, "# sentences without complete heads: {unparsed}")?;
    writeln!(st, "# trees failing validation: {bad_trees}")?;
    writeln!(st, "# reserved codec letters in text: {}", scan.occurrences)?;
    writeln!(st, "# sentences with non-IAST characters: {non_iast}")?;
    st.flush()?;
    Ok(())
}

fn translit(from: &str, to: &str, text: &[String]) -> Result<()> {
    let from = Script::from_str(from).map_err(|e| usage(e.to_string()))?;
    let to = Script::from_str(to).map_err(|e| usage(e.to_string()))?;
    let t = Transliterator::builtin();
    let mut out = create_output(None)?;
    if !text.is_empty() {
        writeln!(out, "{}", t.transliterate(&text.join(" "), from, to)?)?;
    } else {
        for (n, line) in std::io::stdin().lock().lines().enumerate() {
            let line = line?;
            let converted = t.transliterate(&line, from, to).with_context(|| format!("line {}", n + 1))?;
            writeln!(out, "{converted}")?;
        }
    }
    out.flush()?;
    Ok(())
}

fn build_codebook(cfg: &RunConfig, args: &CorpusArgs, out: Option<&Path>, alphabet: &str) -> Result<()> {
    let sentences = read_corpus(cfg, args)?;
    let scan = scan_reserved(&sentences, alphabet);
    if scan.occurrences > 0 {
        let ex: Vec<String> = scan.examples.iter().map(|(i, s)| format!("sentence {i}: {s}")).collect();
        bail!("{} reserved letters occur in corpus text, e.g. {}", scan.occurrences, ex.join("; "));
    }
    let cb = Codebook::build(&tag_frequencies(&sentences), alphabet)?;
    let stats = compression_stats(sentences.iter().flat_map(|s| s.tokens.iter().map(|t| &t.morph)), &cb)?;
    let mut w = create_output(out)?;
    cb.write(&mut w)?;
    w.flush()?;
    eprintln!(
        "tags={} tokens={} mean_tag_chars={:.2} compression_ratio={:.4} version={}",
        cb.len(),
        stats.tokens,
        stats.mean_tag_len()?,
        stats.ratio()?,
        cb.version()
    );
    Ok(())
}

fn map_tags(cfg: &RunConfig, codebook: Option<PathBuf>, input: Option<&Path>, encode: bool) -> Result<()> {
    let cb = load_codebook(codebook.or(cfg.paths.codebook.clone()).as_deref())?;
    let mut out = create_output(None)?;
    for (n, line) in open_input(input)?.lines().enumerate() {
        let line = line?;
        let mut mapped = Vec::new();
        for item in line.split_whitespace() {
            let m = if encode {
                let tag = MorphTag::from_str(item).with_context(|| format!("line {}", n + 1))?;
                cb.encode(&tag).with_context(|| format!("line {}", n + 1))?.to_string()
            } else {
                cb.decode(item).with_context(|| format!("line {}", n + 1))?.to_string()
            };
            mapped.push(m);
        }
        writeln!(out, "{}", mapped.join(" "))?;
    }
    out.flush()?;
    Ok(())
}

fn sandhi(rules_path: Option<&Path>, op: SandhiOp) -> Result<()> {
    let owned;
    let rules = match rules_path {
        Some(p) => {
            require_existing([&p.to_path_buf()])?;
            let text = std::fs::read_to_string(p)?;
            owned = RuleTable::from_tsv(&text).with_context(|| format!("rule table {}", p.display()))?;
            &owned
        }
        None => RuleTable::builtin(),
    };
    let mut out = create_output(None)?;
    match op {
        SandhiOp::Synth { words } => {
            if words.is_empty() {
                return Err(usage("sandhi synth needs at least one word"));
            }
            writeln!(out, "{}", rules.synth_sequence(&words))?;
        }
        SandhiOp::Analyze { text, position } => {
            let n = text.chars().count();
            let positions: Vec<usize> = match position {
                Some(p) if p >= n => return Err(usage(format!("position {p} is outside the text ({n} characters)"))),
                Some(p) => vec![p],
                None => (0..n).collect(),
            };
            for p in positions {
                for c in rules.analyze_junction(&text, p) {
                    let how = match c.rule {
                        Some(i) => {
                            let r = rules.rule(i);
                            format!("{}+{}={}", r.left_str(), r.right_str(), r.output)
                        }
                        None => "space".to_string(),
                    };
                    writeln!(out, "{p}\t{}\t{}\t{how}", c.left, c.right)?;
                }
            }
        }
        SandhiOp::Validate { text, words } => {
            if rules.validate_segmentation(&text, &words) {
                writeln!(out, "ok")?;
            } else {
                out.flush()?;
                bail!("segmentation does not match: the words synthesize to `{}`", rules.synth_sequence(&words));
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn make_samples(cfg: &RunConfig, args: MakeSamples) -> Result<()> {
    let task_strings: Vec<String> = if !args.tasks.is_empty() {
        args.tasks.clone()
    } else if args.ocr_pairs.is_some() {
        Vec::new()
    } else {
        cfg.tasks.tasks.clone()
    };
    let mut task_sets = Vec::new();
    for t in &task_strings {
        let set = TaskSet::from_str(t).map_err(|e| usage(e.to_string()))?;
        if set.contains(Task::Ocr) {
            return Err(usage("OCR samples come from --ocr-pairs"));
        }
        task_sets.push(set);
    }
    if let Some(p) = &args.ocr_pairs {
        require_existing([p])?;
    }
    let budget = args.budget.unwrap_or(cfg.paragraph_budget);
    let paragraphs = args.paragraphs || cfg.tasks.paragraphs;
    let include_reconstructed = !args.no_reconstructed && cfg.tasks.include_reconstructed;
    let joiner = args.joiner.unwrap_or(cfg.tasks.joiner);
    let needs_codebook = task_sets.iter().any(|t| t.contains(Task::Morph));
    let codebook = if needs_codebook { Some(load_codebook(args.codebook.or(cfg.paths.codebook.clone()).as_deref())?) } else { None };
    let rules_owned;
    let rules = match args.rules.as_ref().or(cfg.paths.rules.as_ref()) {
        Some(p) => {
            require_existing([p])?;
            rules_owned = RuleTable::from_tsv(&std::fs::read_to_string(p)?)?;
            &rules_owned
        }
        None => RuleTable::builtin(),
    };
    let sentences = if task_sets.is_empty() { Vec::new() } else { read_corpus(cfg, &args.corpus)? };

    let mut w = create_output(args.out.output.as_deref())?;
    if !args.no_header {
        let names: Vec<String> = task_sets.iter().map(|t| t.prefix()).chain(args.ocr_pairs.as_ref().map(|_| "O".to_string())).collect();
        writeln!(
            w,
            "# sktkit make-samples tasks={} unit={} reconstructed={} budget={budget} seed={}",
            names.join(","),
            if paragraphs { "paragraph" } else { "sentence" },
            if include_reconstructed { "include" } else { "exclude" },
            cfg.seed
        )?;
    }
    for tasks in task_sets {
        let mut spec = TaskSpec::new(tasks);
        if paragraphs {
            spec = spec.paragraphs();
        }
        spec.include_reconstructed = include_reconstructed;
        spec.joiner = joiner;
        let (samples, report) = generate_samples(&sentences, &spec, budget, codebook.as_ref(), Some(rules), cfg.jobs)?;
        write_samples(&mut w, &samples)?;
        eprintln!(
            "{}: {} samples, {} flagged R, {} sentences dropped as reconstructed, {} not sandhi-consistent",
            tasks.prefix(),
            report.samples,
            report.flagged,
            report.dropped_reconstructed,
            report.sandhi_inconsistent
        );
    }
    if let Some(p) = &args.ocr_pairs {
        let mut n = 0;
        for (i, line) in open_input(Some(p))?.lines().enumerate() {
            let line = line?;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (noisy, clean) = line.split_once('\t').ok_or_else(|| anyhow!("{} line {}: expected noisy<TAB>clean", p.display(), i + 1))?;
            let s = make_ocr_sample_truncated(noisy, clean, OCR_MAX_CHARS).with_context(|| format!("{} line {}", p.display(), i + 1))?;
            write_samples(&mut w, std::slice::from_ref(&s))?;
            n += 1;
        }
        eprintln!("O: {n} samples");
    }
    w.flush()?;
    Ok(())
}

fn make_paragraphs(cfg: &RunConfig, args: &CorpusArgs, out: Option<&Path>, budget: Option<usize>) -> Result<()> {
    let sentences = read_corpus(cfg, args)?;
    let budget = budget.unwrap_or(cfg.paragraph_budget);
    let ranges = paragraph_ranges(&sentences, budget, |_| true);
    let mut w = create_output(out)?;
    writeln!(w, "# sktkit make-paragraphs budget={budget} paragraphs={} sentences={} seed={}", ranges.len(), sentences.len(), cfg.seed)?;
    writeln!(w, "# text_id\tfirst_sentence\tsentences\tcharacters\ttext")?;
    for r in ranges {
        let p = sktkit::taskgen::to_paragraph(&sentences[r.clone()]);
        writeln!(w, "{}\t{}\t{}\t{}\t{}", sentences[r.start].text_id, r.start, r.len(), p.char_len, p.raw_text())?;
    }
    w.flush()?;
    Ok(())
}

fn splits(cfg: &RunConfig, args: MakeSplits) -> Result<()> {
    let sentences = read_corpus(cfg, &args.corpus)?;
    let split = match &args.replay {
        Some(m) => {
            let manifest = SplitManifest::read(open_input(Some(m))?)?;
            apply_manifest(sentences, &manifest)?
        }
        None => {
            let dev = args.dev.unwrap_or(cfg.splits.dev);
            let test = args.test.unwrap_or(cfg.splits.test);
            let prefixes: Vec<String> = if args.exclude_text.is_empty() { cfg.splits.exclude_text_prefixes.clone() } else { args.exclude_text.clone() };
            make_splits(sentences, dev, test, |s| prefixes.iter().any(|p| s.text_id.starts_with(p.as_str())), cfg.seed)?
        }
    };
    match &args.out_dir {
        Some(dir) => {
            for (name, part) in [("train", &split.train), ("dev", &split.dev), ("test", &split.test)] {
                let mut w = create_output(Some(&dir.join(format!("{name}.conllu"))))?;
                write_conllu(&mut w, part, &cfg.conllu)?;
                w.flush()?;
            }
            let mut w = create_output(Some(&dir.join("manifest.tsv")))?;
            split.manifest.write(&mut w)?;
            w.flush()?;
        }
        None => {
            let mut w = create_output(args.manifest.as_deref())?;
            split.manifest.write(&mut w)?;
            w.flush()?;
        }
    }
    eprintln!("train={} dev={} test={} seed={}", split.train.len(), split.dev.len(), split.test.len(), split.manifest.seed);
    Ok(())
}

fn dep_config(features: FeatureArg, codebook: Option<PathBuf>, label_codebook: Option<PathBuf>, cfg: &RunConfig) -> Result<DepSampleConfig> {
    let features = match features {
        FeatureArg::None => DepFeatures::None,
        FeatureArg::All => DepFeatures::All,
    };
    let tag_codebook = match features {
        DepFeatures::All => Some(load_codebook(codebook.or(cfg.paths.codebook.clone()).as_deref())?),
        DepFeatures::None => None,
    };
    let label_codebook = label_codebook.map(|p| load_codebook(Some(&p))).transpose()?;
    Ok(DepSampleConfig { features, joiner: cfg.tasks.joiner, tag_codebook, label_codebook })
}

fn dep(cfg: &RunConfig, op: DepOp) -> Result<()> {
    match op {
        DepOp::Linearize { corpus, out, features, codebook, label_codebook, augment, mask_mantras: mask } => {
            let config = dep_config(features, codebook, label_codebook, cfg)?;
            let mut sentences = read_corpus(cfg, &corpus)?;
            if mask {
                sentences = sentences.into_iter().map(mask_mantras).collect();
            }
            let before = sentences.len();
            sentences.retain(|s| s.tokens.iter().all(|t| t.head.is_some() && t.deprel.is_some()) && validate_tree(s).is_rooted_tree());
            if sentences.len() < before {
                eprintln!("skipped {} sentences without a complete, valid tree", before - sentences.len());
            }
            if augment >= 2 {
                sentences = augment_dep_training(&sentences, augment, cfg.seed);
            }
            let pairs = sentences
                .iter()
                .enumerate()
                .map(|(i, s)| linearize(s, &config).with_context(|| format!("sentence {} ({})", i + 1, s.sent_id.as_deref().unwrap_or("-"))))
                .collect::<Result<Vec<_>>>()?;
            let mut buf = Vec::new();
            write_dep_samples(&mut buf, &pairs)?;
            let text = String::from_utf8(buf)?;
            let (header, body) = text.split_once('\n').unwrap_or((&text, ""));
            let mut w = create_output(out.output.as_deref())?;
            writeln!(w, "{header}")?;
            writeln!(w, "# sktkit dep linearize features={} augment={augment} mask_mantras={mask} seed={}", format!("{features:?}").to_lowercase(), cfg.seed)?;
            w.write_all(body.as_bytes())?;
            w.flush()?;
            Ok(())
        }
        DepOp::Delinearize { input, out, features, label_codebook } => {
            let config = dep_config(features, None, label_codebook, cfg).or_else(|e| match features {
                FeatureArg::All => Ok(DepSampleConfig { features: DepFeatures::All, joiner: cfg.tasks.joiner, tag_codebook: None, label_codebook: None }),
                FeatureArg::None => Err(e),
            })?;
            let pairs = read_samples(open_input(input.as_deref())?)?;
            let mut total = RepairReport::default();
            let mut sentences = Vec::with_capacity(pairs.len());
            for (n, (src, tgt)) in pairs.iter().enumerate() {
                let (mut s, rep) = delinearize(src, tgt, &config);
                s.sent_id = Some((n + 1).to_string());
                total.add(&rep);
                sentences.push(s);
            }
            let mut w = create_output(out.output.as_deref())?;
            write_conllu(&mut w, &sentences, &cfg.conllu)?;
            w.flush()?;
            eprintln!("sentences={} repairs={} {}", sentences.len(), total.total(), serde_json::to_string(&total)?);
            Ok(())
        }
    }
}

fn predict(cfg: &RunConfig, args: Predict) -> Result<()> {
    let mut bc = cfg.backend.clone();
    if let Some(k) = args.backend {
        bc.kind = k;
    }
    if args.endpoint.is_some() {
        bc.endpoint = args.endpoint;
    }
    if args.oracle_table.is_some() {
        bc.oracle_table = args.oracle_table;
    }
    if let Some(m) = args.max_in_flight {
        bc.max_in_flight = m;
    }
    if let Some(t) = args.timeout_ms {
        bc.timeout = std::time::Duration::from_millis(t);
    }
    bc.validate().map_err(|e| usage(e.to_string()))?;
    if let Some(p) = &bc.oracle_table {
        require_existing([p])?;
    }
    let mut sources = Vec::new();
    for (n, line) in open_input(args.input.as_deref())?.lines().enumerate() {
        let line = line?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let src = line.split_once('\t').map_or(line.as_str(), |(s, _)| s);
        if src.is_empty() {
            bail!("line {}: empty source", n + 1);
        }
        sources.push(src.to_string());
    }
    let requests = PredictionRequest::batch(&sources).map_err(|e| anyhow!("{e}"))?;
    let backend = bc.build()?;
    backend.health()?;
    let results = predict_batch(&requests, backend.as_ref(), bc.max_in_flight);

    let mut w = create_output(args.out.output.as_deref())?;
    writeln!(w, "# sktkit predict backend={:?} seed={}", bc.kind, cfg.seed)?;
    let mut first_err: Option<(usize, BackendError)> = None;
    let mut failed = 0;
    for (i, (src, r)) in sources.iter().zip(results).enumerate() {
        let pred = match r {
            Ok(p) => p.replace(['\t', '\n', '\r'], " "),
            Err(e) => {
                failed += 1;
                log::warn!("item {}: {e}", i + 1);
                first_err.get_or_insert((i + 1, e));
                String::new()
            }
        };
        writeln!(w, "{src}\t{pred}")?;
    }
    w.flush()?;
    match first_err {
        None => Ok(()),
        Some((i, e)) => Err(anyhow::Error::new(e).context(format!("{failed} of {} predictions failed (first at item {i})", sources.len()))),
    }
}
