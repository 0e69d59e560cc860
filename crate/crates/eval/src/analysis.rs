//! Model analysis: tree induction, gate norms and attention exports.

use std::fs;
use std::path::Path;

use treeattn_core::matrix_tree::{hard_select, marginals};
use treeattn_core::Mat;
use treeattn_data::bpe::merge_subwords;
use treeattn_data::{Segmentation, Vocab};
use treeattn_model::{AttentionMode, Model};

use crate::collapse::collapse_bpe_scores;
use crate::tree::{cle_decode, DependencyTree};
use crate::EvalError;

fn scores(model: &Model, source: &[usize]) -> Result<Mat, EvalError> {
    model
        .encode(source)?
        .phi
        .ok_or_else(|| EvalError::Unsupported(format!("mode '{}' has no head-word scores", model.config.mode)))
}

/// Word-level tree for a subword source: collapse the head scores, then
/// decode the best tree.
pub fn induce_tree(model: &Model, source: &[usize], seg: &Segmentation) -> Result<DependencyTree<f64>, EvalError> {
    let phi = scores(model, source)?;
    let phi_hat = collapse_bpe_scores(&phi, seg)?;
    Ok(cle_decode(&phi_hat))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateRecord {
    pub sentence: usize,
    pub step: usize,
    pub token: String,
    pub gate_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateReport {
    pub records: Vec<GateRecord>,
    /// Per sentence: the step with the largest gate norm.
    pub argmax_steps: Vec<Option<usize>>,
}

impl GateReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("sentence\tstep\ttoken\tgate_norm\tis_argmax\n");
        for r in &self.records {
            let top = self.argmax_steps[r.sentence] == Some(r.step);
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.sentence, r.step, r.token, r.gate_norm, top as u8
            ));
        }
        out
    }

    /// Mean gate norm over records whose token satisfies `pred`.
    pub fn mean_where(&self, pred: impl Fn(&str) -> bool) -> Option<f64> {
        let picked: Vec<f64> = self.records.iter().filter(|r| pred(&r.token)).map(|r| r.gate_norm).collect();
        (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
    }
}

/// Gate norms at every greedily generated token. The norm recorded for a
/// token is that of the gate applied while predicting it.
pub fn gate_report(model: &Model, target_vocab: &Vocab, sources: &[Vec<usize>]) -> Result<GateReport, EvalError> {
    if model.params.get("dec.gate.w").is_none() {
        return Err(EvalError::Unsupported(format!(
            "mode '{}' has no syntax gate",
            model.config.mode
        )));
    }
    let mut records = Vec::new();
    let mut argmax_steps = Vec::with_capacity(sources.len());
    for (i, src) in sources.iter().enumerate() {
        let out = model.translate(src)?;
        let mut best: Option<(usize, f64)> = None;
        for (step, &tok) in out.tokens.iter().enumerate() {
            let norm = out.traces[step].gate_norm.expect("gated mode");
            if best.map_or(true, |(_, b)| norm > b) {
                best = Some((step, norm));
            }
            records.push(GateRecord {
                sentence: i,
                step,
                token: target_vocab.token(tok).to_owned(),
                gate_norm: norm,
            });
        }
        argmax_steps.push(best.map(|(s, _)| s));
    }
    Ok(GateReport { records, argmax_steps })
}

/// Attention matrices for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionExport {
    pub subwords: Vec<String>,
    pub words: Vec<String>,
    /// Head attention over subwords.
    pub beta: Option<Mat>,
    /// Collapsed word-level scores.
    pub phi_hat: Option<Mat>,
    /// Head attention recomputed from the word-level scores.
    pub beta_hat: Option<Mat>,
    pub generated: Vec<String>,
    /// One row of word attention per generated token.
    pub alpha: Mat,
}

pub fn attention_export(
    model: &Model,
    source_vocab: &Vocab,
    target_vocab: &Vocab,
    subwords: &[String],
) -> Result<AttentionExport, EvalError> {
    let seg = Segmentation::from_marked_tokens(subwords);
    let ids = source_vocab.encode(subwords);
    let encoded = model.encode(&ids)?;
    let phi_hat = match &encoded.phi {
        Some(phi) => Some(collapse_bpe_scores(phi, &seg)?),
        None => None,
    };
    let beta_hat = match (&phi_hat, model.config.mode.attention()) {
        (Some(p), AttentionMode::Structured) => Some(marginals(p)?.beta),
        (Some(p), AttentionMode::StructuredHard) => Some(hard_select(&marginals(p)?.beta)),
        (Some(p), AttentionMode::Flat) => Some(softmax_columns(p)),
        _ => None,
    };
    let translation = model.translate(&ids)?;
    let n = ids.len();
    let mut alpha = Mat::zeros(translation.traces.len(), n);
    for (t, trace) in translation.traces.iter().enumerate() {
        for (j, &a) in trace.alpha.iter().enumerate() {
            alpha[(t, j)] = a;
        }
    }
    let mut generated = target_vocab.decode(&translation.tokens);
    if generated.len() < translation.traces.len() {
        generated.push(treeattn_data::vocab::EOS.to_owned());
    }
    Ok(AttentionExport {
        subwords: subwords.to_vec(),
        words: merge_subwords(subwords),
        beta: encoded.beta,
        phi_hat,
        beta_hat,
        generated,
        alpha,
    })
}

fn softmax_columns(m: &Mat) -> Mat {
    let mut out = m.clone();
    for j in 0..m.cols() {
        let col = m.column(j);
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = col.iter().map(|v| (v - max).exp()).sum();
        for i in 0..m.rows() {
            out[(i, j)] = (m[(i, j)] - max).exp() / total;
        }
    }
    out
}

fn io_err(path: &Path, e: std::io::Error) -> EvalError {
    EvalError::Io {
        path: path.display().to_string(),
        source: e,
    }
}

/// Writes a matrix with a header row of column labels and a label column.
/// Values use the shortest representation that reads back exactly.
pub fn write_matrix_tsv(path: &Path, rows: &[String], cols: &[String], m: &Mat) -> Result<(), EvalError> {
    assert_eq!((rows.len(), cols.len()), m.shape(), "labels must match the matrix");
    let mut out = String::new();
    out.push_str("");
    for c in cols {
        out.push('\t');
        out.push_str(c);
    }
    out.push('\n');
    for (i, r) in rows.iter().enumerate() {
        out.push_str(r);
        for j in 0..m.cols() {
            out.push('\t');
            out.push_str(&m[(i, j)].to_string());
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads a file written by [`write_matrix_tsv`].
pub fn read_matrix_tsv(path: &Path) -> Result<(Vec<String>, Vec<String>, Mat), EvalError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let parse_err = |line: usize, msg: String| EvalError::Parse {
        path: path.display().to_string(),
        line,
        message: msg,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err(1, "empty file".into()))?;
    let cols: Vec<String> = header.split('\t').skip(1).map(String::from).collect();
    let mut rows = Vec::new();
    let mut data = Vec::new();
    for (k, line) in lines.enumerate() {
        let mut fields = line.split('\t');
        rows.push(fields.next().unwrap_or_default().to_owned());
        let values: Vec<f64> = fields
            .map(|f| f.parse::<f64>().map_err(|e| parse_err(k + 2, format!("'{}': {}", f, e))))
            .collect::<Result<_, _>>()?;
        if values.len() != cols.len() {
            return Err(parse_err(k + 2, format!("expected {} values, found {}", cols.len(), values.len())));
        }
        data.extend(values);
    }
    let m = Mat::from_vec(rows.len(), cols.len(), data);
    Ok((rows, cols, m))
}

impl AttentionExport {
    /// Writes `beta.tsv`, `phi_hat.tsv`, `beta_hat.tsv` (when the model has
    /// head-word attention) and `alpha.tsv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), EvalError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        if let Some(beta) = &self.beta {
            write_matrix_tsv(&dir.join("beta.tsv"), &self.subwords, &self.subwords, beta)?;
        }
        if let Some(phi_hat) = &self.phi_hat {
            write_matrix_tsv(&dir.join("phi_hat.tsv"), &self.words, &self.words, phi_hat)?;
        }
        if let Some(beta_hat) = &self.beta_hat {
            write_matrix_tsv(&dir.join("beta_hat.tsv"), &self.words, &self.words, beta_hat)?;
        }
        write_matrix_tsv(&dir.join("alpha.tsv"), &self.generated, &self.subwords, &self.alpha)
    }
}
