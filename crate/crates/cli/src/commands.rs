use std::fmt::Write as _;
use std::path::Path;

use cpcfg::analysis::{extremes, match_subtrees, nearest_neighbors, top_principal_component};
use cpcfg::chart::{escape_token, Sentence, Tree};
use cpcfg::corpus::{
    apply_vocab, binarize_right, gold_spans, preprocess as preprocess_trees, strip_tree, write_gold_spans,
    write_processed, LabeledSpan, ProcessedExample, RawTree, TagSet,
};
use cpcfg::diffmath::seeded_rng;
use cpcfg::eval::{
    alignment_table, baseline_spans, evaluate, iw_perplexity, many_to_one, Baseline, EvalMode, EvalReport, SpanSet,
    VacuousPolicy,
};
use cpcfg::grammar::{ModelKind, Symbol};
use cpcfg::model::Model;
use cpcfg::posterior::write_means;
use cpcfg::trainer::{train as train_model, TrainConfig, TrainingCorpus};

use crate::failure::{CmdResult, Failure};
use crate::io::{create_dir, emit, encode, read_sentences, read_text, read_trees, sha256_file, write_file};
use crate::{
    EvalArgs, ExportMeansArgs, NeighborsArgs, ParseArgs, PcaArgs, PerplexityArgs, PreprocessArgs, TrainArgs,
};

fn punct(tags: &Option<String>) -> TagSet {
    tags.as_deref().map(TagSet::parse).unwrap_or_default()
}

fn to_text(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> CmdResult<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| Failure::internal(e.to_string()))?;
    Ok(buf)
}

fn sentences_text(examples: &[ProcessedExample]) -> String {
    examples.iter().map(|e| e.tokens.join(" ") + "\n").collect()
}

fn trees_text(examples: &[ProcessedExample]) -> String {
    examples.iter().map(|e| format!("{}\n", e.tree)).collect()
}

fn write_split(dir: &Path, name: &str, examples: &[ProcessedExample]) -> CmdResult {
    write_file(&dir.join(format!("{name}.txt")), sentences_text(examples))?;
    write_file(&dir.join(format!("{name}.trees")), trees_text(examples))?;
    write_file(&dir.join(format!("{name}.ids")), to_text(|b| write_processed(b, examples))?)?;
    write_file(&dir.join(format!("{name}.spans")), to_text(|b| write_gold_spans(b, examples))?)
}

pub fn preprocess(args: PreprocessArgs) -> CmdResult {
    let tags = punct(&args.punct_tags);
    let train = read_trees(&args.train)?;
    let (vocab, examples) = preprocess_trees(&train, args.vocab_cap, &tags);
    create_dir(&args.out)?;
    write_file(&args.out.join("vocab.txt"), to_text(|b| vocab.write(b))?)?;
    write_split(&args.out, "train", &examples)?;
    eprintln!("train: {} sentences, vocabulary {}", examples.len(), vocab.len());
    for (name, path) in &args.splits {
        let examples = apply_vocab(&read_trees(path)?, &vocab, &tags);
        write_split(&args.out, name, &examples)?;
        eprintln!("{name}: {} sentences", examples.len());
    }
    Ok(())
}

pub fn train(args: TrainArgs, command_line: &[String]) -> CmdResult {
    let mut config = match &args.config {
        Some(path) => TrainConfig::from_kv_str(&read_text(path)?)
            .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?,
        None => TrainConfig::default(),
    };
    if let Some(kind) = args.model {
        config.model = kind;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let checkpoint = args.checkpoint.clone().unwrap_or_else(|| args.out.join("model.ckpt"));
    config.checkpoint = Some(checkpoint.clone());
    config.validate()?;

    let tags = punct(&args.punct_tags);
    let train_trees = read_trees(&args.train)?;
    let valid_trees = read_trees(&args.valid)?;
    let (vocab, train_examples) = preprocess_trees(&train_trees, config.vocab_cap, &tags);
    let valid_examples = apply_vocab(&valid_trees, &vocab, &tags);
    if train_examples.is_empty() {
        return Err(Failure::input(format!("{}: no usable training sentences", args.train.display())));
    }
    let corpus = TrainingCorpus {
        vocab,
        train: train_examples.into_iter().map(|e| e.sentence).collect(),
        valid: valid_examples.into_iter().map(|e| e.sentence).collect(),
    };
    create_dir(&args.out)?;
    let outcome = train_model(&config, &corpus)?;
    outcome.model.save(&checkpoint)?;
    write_file(&args.out.join("train.log"), outcome.log_tsv())?;
    write_file(&args.out.join("config.txt"), config.to_kv_string())?;

    let mut manifest = String::new();
    let _ = writeln!(manifest, "command={}", command_line.join(" "));
    let _ = writeln!(manifest, "seed={}", config.seed);
    let _ = writeln!(manifest, "checkpoint={}", checkpoint.display());
    let _ = writeln!(manifest, "checkpoint_sha256={}", sha256_file(&checkpoint)?);
    let _ = writeln!(manifest, "train={}", args.train.display());
    let _ = writeln!(manifest, "train_sha256={}", sha256_file(&args.train)?);
    let _ = writeln!(manifest, "valid={}", args.valid.display());
    let _ = writeln!(manifest, "valid_sha256={}", sha256_file(&args.valid)?);
    let _ = writeln!(manifest, "punct_tags={}", tags.iter().collect::<Vec<_>>().join(" "));
    let _ = writeln!(manifest, "best_epoch={}", outcome.best_epoch.map_or("none".into(), |e| e.to_string()));
    for line in config.to_kv_string().lines() {
        let _ = writeln!(manifest, "config.{line}");
    }
    write_file(&args.out.join("manifest.txt"), manifest)?;
    eprint!("{}", outcome.log_tsv());
    Ok(())
}

fn load_model(path: &Path) -> CmdResult<Model> {
    Model::load(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

pub fn parse(args: ParseArgs) -> CmdResult {
    let model = load_model(&args.checkpoint)?;
    let lines = read_sentences(&args.input)?;
    let mut out = String::new();
    let (mut oov, mut failed) = (0usize, 0usize);
    for (n, tokens) in lines.iter().enumerate() {
        let sentence = encode(model.vocab(), tokens, &mut oov);
        match model.parse(&sentence) {
            Ok(p) => {
                let words: Vec<String> = tokens.iter().map(|t| escape_token(t)).collect();
                out.push_str(&p.tree.to_bracketed(&words));
            }
            Err(e) => {
                eprintln!("line {}: {e}", n + 1);
                failed += 1;
            }
        }
        out.push('\n');
    }
    if oov > 0 {
        log::warn!("{oov} out-of-vocabulary tokens mapped to <unk>");
    }
    if failed > 0 {
        eprintln!("{failed} of {} sentences could not be parsed", lines.len());
    }
    emit(args.out.as_ref(), &out)
}

/// Predicted parse: span set, nonterminal-labeled spans and preterminals.
struct Prediction {
    spans: SpanSet,
    labeled: Vec<(usize, usize, usize)>,
    preterminals: Option<Vec<usize>>,
}

fn read_predictions(path: &Path, gold: &[RawTree], tags: &TagSet) -> CmdResult<Vec<Prediction>> {
    let text = read_text(path)?;
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() != gold.len() {
        return Err(Failure::input(format!(
            "{}: {} predicted lines for {} gold trees",
            path.display(),
            lines.len(),
            gold.len()
        )));
    }
    let mut out = Vec::with_capacity(lines.len());
    for (id, (line, g)) in lines.iter().zip(gold).enumerate() {
        if line.trim().is_empty() {
            out.push(Prediction {
                spans: SpanSet::new(),
                labeled: Vec::new(),
                preterminals: None,
            });
            continue;
        }
        let tree = cpcfg::corpus::read_bracketed(line)
            .map_err(|e| Failure::input(format!("{}: sentence {id}: {e}", path.display())))?
            .into_iter()
            .next()
            .unwrap();
        // Same normalization as gold, so gold trees can be scored as predictions.
        let tree = strip_tree(&tree, tags).unwrap_or(tree);
        if tree.words() != g.words() {
            return Err(Failure::input(format!(
                "sentence {id}: predicted and gold yields differ ({:?} vs {:?})",
                tree.words().join(" "),
                g.words().join(" ")
            )));
        }
        let spans = gold_spans(&tree);
        let labeled = spans
            .iter()
            .filter_map(|s| match Symbol::parse_name(&s.label) {
                Some(Symbol::Nonterminal(a)) => Some((s.start, s.end, a)),
                _ => None,
            })
            .collect();
        let preterminals = tree
            .tags()
            .iter()
            .map(|t| match Symbol::parse_name(t) {
                Some(Symbol::Preterminal(p)) => Some(p),
                _ => None,
            })
            .collect();
        out.push(Prediction {
            spans: SpanSet::from_labeled(&spans),
            labeled,
            preterminals,
        });
    }
    Ok(out)
}

pub fn eval(args: EvalArgs) -> CmdResult {
    let tags = punct(&args.punct_tags);
    let gold_trees: Vec<RawTree> = read_trees(&args.gold)?
        .iter()
        .enumerate()
        .map(|(i, t)| {
            strip_tree(t, &tags).ok_or_else(|| Failure::input(format!("gold tree {i} is all punctuation")))
        })
        .collect::<CmdResult<_>>()?;
    let gold: Vec<Vec<LabeledSpan>> = gold_trees.iter().map(gold_spans).collect();
    let lens: Vec<usize> = gold_trees.iter().map(RawTree::num_leaves).collect();
    let policy = if args.skip_vacuous { VacuousPolicy::Skip } else { VacuousPolicy::Perfect };

    let mut report = EvalReport::default();
    let mut kv_extra = String::new();
    let mut pred = None;
    if let Some(path) = &args.pred {
        let p = read_predictions(path, &gold_trees, &tags)?;
        let spans: Vec<SpanSet> = p.iter().map(|x| x.spans.clone()).collect();
        let (score, recall) = evaluate("model", &spans, &gold, &lens, policy)?;
        report.rows.push(score);
        report.label_recall = recall;
        if let Some(pts) = p.iter().map(|x| x.preterminals.clone()).collect::<Option<Vec<Vec<usize>>>>() {
            let gold_tags: Vec<Vec<String>> = gold_trees
                .iter()
                .map(|t| t.tags().into_iter().map(str::to_string).collect())
                .collect();
            let m2o = many_to_one(&pts, &gold_tags)?;
            let _ = writeln!(kv_extra, "model.many_to_one={m2o}");
        }
        pred = Some(p);
    }
    let mut rng = seeded_rng(args.seed);
    for &b in &args.baselines {
        let spans = lens
            .iter()
            .map(|&n| if n < 2 { Ok(SpanSet::new()) } else { baseline_spans(b, n, &mut rng) })
            .collect::<cpcfg::Result<Vec<_>>>()?;
        let name = match b {
            Baseline::Left => "left",
            Baseline::Right => "right",
            Baseline::Random => "random",
        };
        let (score, recall) = evaluate(name, &spans, &gold, &lens, policy)?;
        if report.rows.is_empty() {
            report.label_recall = recall;
        }
        report.rows.push(score);
    }
    if args.oracle {
        let spans: Vec<SpanSet> = gold_trees
            .iter()
            .map(|t| SpanSet::from_labeled(&gold_spans(&binarize_right(t))))
            .collect();
        let (score, recall) = evaluate("oracle", &spans, &gold, &lens, policy)?;
        if report.rows.is_empty() {
            report.label_recall = recall;
        }
        report.rows.push(score);
    }
    if report.rows.is_empty() {
        return Err(Failure::input("nothing to evaluate: give --pred, --baseline or --oracle"));
    }

    if let (Some(path), Some(p)) = (&args.alignment, &pred) {
        let labeled: Vec<Vec<(usize, usize, usize)>> = p.iter().map(|x| x.labeled.clone()).collect();
        let labels: Vec<String> = args.labels.split_whitespace().map(str::to_string).collect();
        let table = alignment_table(&labeled, &gold, &lens, &labels)?;
        write_file(path, table.to_csv())?;
    }
    if let Some(path) = &args.kv {
        write_file(path, report.to_kv() + &kv_extra)?;
    }
    for r in &report.rows {
        let f1 = match args.eval_mode {
            EvalMode::Sentence => r.sentence_f1,
            EvalMode::Corpus => r.corpus_f1,
        };
        let mode = if args.eval_mode == EvalMode::Sentence { "sentence" } else { "corpus" };
        eprintln!("{}: {mode} F1 {f1:.2}", r.name);
    }
    emit(args.out.as_ref(), &report.to_tsv())
}

fn load_sentences(model: &Model, path: &Path) -> CmdResult<(Vec<Vec<String>>, Vec<Sentence>)> {
    let tokens: Vec<Vec<String>> = read_sentences(path)?;
    let mut oov = 0;
    let sentences = tokens.iter().map(|t| encode(model.vocab(), t, &mut oov)).collect();
    if oov > 0 {
        log::warn!("{oov} out-of-vocabulary tokens mapped to <unk>");
    }
    Ok((tokens, sentences))
}

pub fn perplexity(args: PerplexityArgs) -> CmdResult {
    let model = load_model(&args.checkpoint)?;
    let (_, sentences) = load_sentences(&model, &args.input)?;
    let sentences: Vec<Sentence> = sentences.into_iter().filter(|s| s.len() >= 2).collect();
    let est = iw_perplexity(&model, &sentences, args.iw_samples, &mut seeded_rng(args.seed))?;
    let text = format!(
        "perplexity={}\nlog_likelihood={}\ntokens={}\nsentences={}\nsamples={}\n",
        est.perplexity,
        est.log_likelihood,
        est.tokens,
        sentences.len(),
        if model.kind() == ModelKind::Compound { args.iw_samples } else { 0 }
    );
    emit(None, &text)
}

fn posterior_means(model: &Model, sentences: &[Sentence]) -> CmdResult<Vec<Vec<f64>>> {
    if model.kind() != ModelKind::Compound {
        return Err(Failure::input(format!("{} checkpoint has no posterior", model.kind())));
    }
    sentences
        .iter()
        .map(|s| Ok(model.posterior(s)?.mean))
        .collect()
}

pub fn neighbors(args: NeighborsArgs) -> CmdResult {
    let model = load_model(&args.checkpoint)?;
    let (tokens, sentences) = load_sentences(&model, &args.input)?;
    let means = posterior_means(&model, &sentences)?;
    let mut out = String::from("query\trank\tneighbor\tsimilarity\tsentence\n");
    for &q in &args.query {
        for (rank, n) in nearest_neighbors(&means, q, args.k)?.into_iter().enumerate() {
            let _ = writeln!(
                out,
                "{q}\t{}\t{}\t{:.6}\t{}",
                rank + 1,
                n.id,
                n.similarity,
                tokens[n.id].join(" ")
            );
        }
    }
    emit(args.out.as_ref(), &out)
}

pub fn pca(args: PcaArgs) -> CmdResult {
    let model = load_model(&args.checkpoint)?;
    let (tokens, sentences) = load_sentences(&model, &args.input)?;
    let means = posterior_means(&model, &sentences)?;
    let mut trees: Vec<Tree> = Vec::with_capacity(sentences.len());
    let mut index = Vec::with_capacity(sentences.len());
    for (i, s) in sentences.iter().enumerate() {
        if s.len() >= 2 {
            trees.push(model.parse(s)?.tree);
            index.push(i);
        }
    }
    let matches = match_subtrees(&trees, &args.pattern)?;
    if matches.len() < 2 {
        return Err(Failure::input(format!(
            "pattern matched {} subtrees; at least 2 are needed",
            matches.len()
        )));
    }
    let vectors: Vec<Vec<f64>> = matches.iter().map(|m| means[index[m.sentence]].clone()).collect();
    let pc = top_principal_component(&vectors)?;
    let mut out = String::new();
    let _ = writeln!(out, "# matches={} variance={} iterations={}", matches.len(), pc.variance, pc.iterations);
    if pc.degenerate {
        let _ = writeln!(out, "# warning: all matched vectors are identical");
        log::warn!("all matched posterior means are identical");
    }
    out.push_str("side\trank\tprojection\tsentence\tstart\tend\tconstituent\n");
    let (neg, pos) = extremes(&pc.projections, args.top_m);
    for (side, list) in [("negative", neg), ("positive", pos)] {
        for (rank, i) in list.into_iter().enumerate() {
            let m = matches[i];
            let sid = index[m.sentence];
            let text = tokens[sid][m.start..=m.end].join(" ");
            let _ = writeln!(
                out,
                "{side}\t{}\t{:.6}\t{sid}\t{}\t{}\t{text}",
                rank + 1,
                pc.projections[i],
                m.start,
                m.end
            );
        }
    }
    emit(args.out.as_ref(), &out)
}

pub fn export_means(args: ExportMeansArgs) -> CmdResult {
    let model = load_model(&args.checkpoint)?;
    let (_, sentences) = load_sentences(&model, &args.input)?;
    let means = posterior_means(&model, &sentences)?;
    let rows: Vec<(usize, Vec<f64>)> = means.into_iter().enumerate().collect();
    let text = String::from_utf8(to_text(|b| write_means(b, &rows))?).expect("means are UTF-8");
    emit(args.out.as_ref(), &text)
}

