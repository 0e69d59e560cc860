//! `treeattn`: corpus preparation, training, translation, tree induction
//! and evaluation.

mod error;
mod train_config;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use treeattn_data::bpe::merge_subwords;
use treeattn_data::conllu::write_conllu;
use treeattn_data::corpus::write_tokenized;
use treeattn_data::{make_synthetic_corpus, read_conllu, read_parallel, read_tokenized, BpeCodes, Segmentation};
use treeattn_data::{GoldTree, SentencePair, Vocab};
use treeattn_eval::attachment::{left_branching, right_branching};
use treeattn_eval::{attachment_accuracy, attention_export, bleu, bootstrap_significance, gate_report, induce_tree};
use treeattn_model::{Checkpoint, Model, ModelError, ModelMode, Trainer};

use error::{io_error, CliError};
use train_config::{RunConfig, TrainOptions};

#[derive(Debug, Parser)]
#[command(name = "treeattn", version, about = "Translation with latent dependency-tree attention")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn BPE merge operations from tokenized text
    BpeLearn {
        /// Training text; may be given several times
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        merges: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Segment tokenized text with learned merges
    BpeApply {
        #[arg(long)]
        codes: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic agreement corpus (src.txt, tgt.txt, gold.conllu)
    MakeSynth {
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write a checkpoint plus a TSV log
    Train {
        /// JSON file whose keys mirror the flag names
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        options: TrainOptions,
    },
    /// Greedy translation, one sentence per line
    Translate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        src: PathBuf,
        /// Output file (standard output when absent)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Reference translations; prints BLEU when given
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        /// Join subword pieces in the output
        #[arg(long)]
        merge_bpe: bool,
    },
    /// Extract one dependency tree per source sentence
    Induce {
        #[command(flatten)]
        model: ModelArgs,
        /// Source sentences; word-level when --bpe is given, subword-level otherwise
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        bpe: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Directed and undirected attachment accuracy
    EvalAttachment {
        #[arg(long, required_unless_present = "baseline")]
        pred: Option<PathBuf>,
        #[arg(long)]
        gold: PathBuf,
        /// Score a branching baseline instead of predicted trees
        #[arg(long, conflicts_with = "pred")]
        baseline: Option<Branching>,
    },
    /// Corpus BLEU
    EvalBleu {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
    },
    /// Paired bootstrap significance between two systems
    Significance {
        #[arg(long)]
        hyp_a: PathBuf,
        #[arg(long)]
        hyp_b: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long, default_value_t = 1000)]
        resamples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Gate norms at every generated token
    Gates {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write attention matrices as TSV files, one directory per sentence
    ExportAttn {
        #[command(flatten)]
        model: ModelArgs,
        /// Subword-level source sentences
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// 0-based sentence indices to export (all when absent)
        #[arg(long)]
        index: Vec<usize>,
    },
}

#[derive(Debug, clap::Args)]
struct ModelArgs {
    /// Checkpoint written by `train`
    #[arg(long = "model")]
    path: PathBuf,
    /// Expected model variant; a mismatch with the checkpoint is an error
    #[arg(long)]
    mode: Option<ModelMode>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Branching {
    Left,
    Right,
}

impl ModelArgs {
    fn load(&self) -> Result<Checkpoint, CliError> {
        let ckpt = Checkpoint::load(&self.path)?;
        if let Some(requested) = self.mode {
            let checkpoint = ckpt.model.config.mode;
            if checkpoint != requested {
                return Err(ModelError::ModeMismatch { checkpoint, requested }.into());
            }
        }
        Ok(ckpt)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::BpeLearn { input, merges, out } => {
            let mut corpus = Vec::new();
            for path in &input {
                corpus.extend(read_tokenized(path)?);
            }
            let codes = BpeCodes::learn(&corpus, merges)?;
            eprintln!("learned {} merges", codes.len());
            codes.save(&out)?;
        }
        Command::BpeApply { codes, input, out } => {
            let codes = BpeCodes::load(&codes)?;
            let segmented: Vec<Vec<String>> =
                read_tokenized(&input)?.iter().map(|s| codes.apply(s).0).collect();
            write_tokenized(&out, &segmented)?;
        }
        Command::MakeSynth { size, seed, out } => {
            make_synthetic_corpus(size, seed).write(&out)?;
        }
        Command::Train { config, options } => {
            let file = config.as_deref().map(TrainOptions::from_file).transpose()?;
            train(RunConfig::resolve(options, file)?)?;
        }
        Command::Translate { model, src, out, reference, merge_bpe } => {
            let ckpt = model.load()?;
            let sources = read_tokenized(&src)?;
            let mut hyps = Vec::with_capacity(sources.len());
            for s in &sources {
                let ids = ckpt.source_vocab.encode(s);
                let tokens = ckpt.target_vocab.decode(&ckpt.model.translate(&ids)?.tokens);
                hyps.push(if merge_bpe { merge_subwords(&tokens) } else { tokens });
            }
            match &out {
                Some(path) => write_tokenized(path, &hyps)?,
                None => {
                    let mut stdout = std::io::stdout().lock();
                    for h in &hyps {
                        writeln!(stdout, "{}", h.join(" ")).map_err(|e| io_error(Path::new("<stdout>"), e))?;
                    }
                }
            }
            if let Some(r) = reference {
                let line = bleu_line(&hyps, &read_tokenized(&r)?)?;
                // keep standard output parseable when it carries the translations
                if out.is_some() {
                    println!("{}", line);
                } else {
                    eprintln!("{}", line);
                }
            }
        }
        Command::Induce { model, src, bpe, out } => {
            let ckpt = model.load()?;
            let codes = bpe.as_deref().map(BpeCodes::load).transpose()?;
            let mut trees = Vec::new();
            for (i, sentence) in read_tokenized(&src)?.iter().enumerate() {
                if sentence.is_empty() {
                    return Err(CliError::Data(format!("{}:{}: empty sentence", src.display(), i + 1)));
                }
                let (tokens, seg) = match &codes {
                    Some(c) => c.apply(sentence),
                    None => (sentence.clone(), Segmentation::from_marked_tokens(sentence)),
                };
                let tree = induce_tree(&ckpt.model, &ckpt.source_vocab.encode(&tokens), &seg)?;
                let forms = merge_subwords(&tokens);
                let upos = vec![String::new(); forms.len()];
                trees.push(GoldTree::new(forms, tree.heads, upos)?);
            }
            write_conllu(&out, &trees)?;
        }
        Command::EvalAttachment { pred, gold, baseline } => {
            let gold = read_conllu(&gold)?;
            let heads: Vec<Vec<usize>> = match (pred, baseline) {
                (Some(p), _) => read_conllu(&p)?.into_iter().map(|t| t.heads).collect(),
                (None, Some(Branching::Left)) => gold.iter().map(|g| left_branching(g.len())).collect(),
                (None, Some(Branching::Right)) => gold.iter().map(|g| right_branching(g.len())).collect(),
                (None, None) => return Err(CliError::Usage("either --pred or --baseline is required".into())),
            };
            let report = attachment_accuracy(&heads, &gold)?;
            println!("DA\tUA\tcounted\texcluded");
            println!("{}", report.to_tsv());
        }
        Command::EvalBleu { hyp, reference } => {
            println!("{}", bleu_line(&read_tokenized(&hyp)?, &read_tokenized(&reference)?)?);
        }
        Command::Significance { hyp_a, hyp_b, reference, resamples, seed } => {
            let s = bootstrap_significance(
                &read_tokenized(&hyp_a)?,
                &read_tokenized(&hyp_b)?,
                &read_tokenized(&reference)?,
                resamples,
                seed,
            )?;
            println!("bleu_a\tbleu_b\tp_a_not_better\tp_b_not_better\tresamples");
            println!(
                "{}\t{}\t{}\t{}\t{}",
                s.bleu_a, s.bleu_b, s.p_a_not_better, s.p_b_not_better, s.resamples
            );
        }
        Command::Gates { model, src, out } => {
            let ckpt = model.load()?;
            let sources: Vec<Vec<usize>> =
                read_tokenized(&src)?.iter().map(|s| ckpt.source_vocab.encode(s)).collect();
            let report = gate_report(&ckpt.model, &ckpt.target_vocab, &sources)?;
            fs::write(&out, report.to_tsv()).map_err(|e| io_error(&out, e))?;
        }
        Command::ExportAttn { model, src, out, index } => {
            let ckpt = model.load()?;
            let sentences = read_tokenized(&src)?;
            let chosen: Vec<usize> = if index.is_empty() { (0..sentences.len()).collect() } else { index };
            for i in chosen {
                let sentence = sentences
                    .get(i)
                    .ok_or_else(|| CliError::Data(format!("no sentence {} in {}", i, src.display())))?;
                let ex = attention_export(&ckpt.model, &ckpt.source_vocab, &ckpt.target_vocab, sentence)?;
                ex.write(&out.join(i.to_string()))?;
            }
        }
    }
    Ok(())
}

fn bleu_line(hyps: &[Vec<String>], refs: &[Vec<String>]) -> Result<String, CliError> {
    Ok(format!("BLEU\t{:.2}", bleu(hyps, refs)?))
}

fn numerize(pairs: &[(Vec<String>, Vec<String>)], src: &Vocab, tgt: &Vocab) -> Vec<SentencePair> {
    pairs
        .iter()
        .map(|(s, t)| SentencePair {
            source: src.encode(s),
            target: tgt.encode(t),
        })
        .collect()
}

fn train(cfg: RunConfig) -> Result<(), CliError> {
    let resolved = serde_json::to_string(&cfg).expect("config serializes");
    eprintln!("config: {}", resolved);
    let mut train = read_parallel(&cfg.src, &cfg.tgt)?;
    let valid = read_parallel(&cfg.valid_src, &cfg.valid_tgt)?;
    let before = train.len();
    train.retain(|(s, _)| s.len() <= cfg.max_source_len);
    if train.len() < before {
        eprintln!("skipped {} training sentences longer than {}", before - train.len(), cfg.max_source_len);
    }
    if let Some((i, _)) = valid.iter().enumerate().find(|(_, (s, _))| s.len() > cfg.max_source_len) {
        return Err(CliError::Data(format!(
            "{}:{}: sentence longer than {} tokens",
            cfg.valid_src.display(),
            i + 1,
            cfg.max_source_len
        )));
    }
    let sources: Vec<Vec<String>> = train.iter().map(|p| p.0.clone()).collect();
    let targets: Vec<Vec<String>> = train.iter().map(|p| p.1.clone()).collect();
    let (src_vocab, tgt_vocab) = (Vocab::from_corpus(&sources), Vocab::from_corpus(&targets));
    eprintln!(
        "{} training pairs, {} validation pairs, vocabularies {} / {}",
        train.len(),
        valid.len(),
        src_vocab.len(),
        tgt_vocab.len()
    );
    let model = Model::new(cfg.model_config(src_vocab.len(), tgt_vocab.len()), cfg.training.seed)?;
    eprintln!("{} parameters", model.params.num_scalars());
    let train_pairs = numerize(&train, &src_vocab, &tgt_vocab);
    let valid_pairs = numerize(&valid, &src_vocab, &tgt_vocab);

    let log_file = fs::File::create(&cfg.log).map_err(|e| io_error(&cfg.log, e))?;
    let mut log = Tee {
        file: BufWriter::new(log_file),
    };
    let outcome = Trainer::new(model, cfg.training.clone())?.run(&train_pairs, &valid_pairs, &mut log)?;
    eprintln!(
        "finished after {} updates; best validation perplexity {:?} at update {}",
        outcome.state.update, outcome.state.best_valid_ppl, outcome.state.best_update
    );
    let mut ckpt = Checkpoint::new(outcome.best, src_vocab, tgt_vocab, cfg.training);
    ckpt.state = outcome.state;
    ckpt.adam = outcome.best_adam;
    ckpt.save(&cfg.out)?;
    Ok(())
}

/// Writes the log file and mirrors it to standard error.
struct Tee<W: Write> {
    file: W,
}

impl<W: Write> Write for Tee<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.file.write_all(buf)?;
        std::io::stderr().write_all(buf)?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.file.flush()
    }
}
