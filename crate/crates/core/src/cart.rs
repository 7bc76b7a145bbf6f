//! CART regression trees over senones.
//!
//! Trees are grown greedily: at each node every candidate question is
//! scored by the summed squared error of its two children and the best one
//! is kept, as long as both children hold at least `stop_size` examples and
//! the split reduces the error. There is no pruning; `stop_size` is the only
//! complexity control.
//!
//! Categorical features ask one-vs-rest equality questions, numeric features
//! ask `value <= threshold` with thresholds at midpoints between observed
//! values. Ties go to the lowest feature index, then the smallest threshold
//! or lexicographically smallest category.
//!
//! The text format is a nested s-expression preceded by a header carrying the
//! schema hash:
//!
//! ```text
//! ;; schema-hash 0123456789abcdef
//! ((cur_phone_class is vowel)
//!  ((0.030000 0.000000 412))
//!  ((-0.010000 0.000000 377)))
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::features::{FeatureKind, FeatureValue, Senone};

/// Stop sizes of the preset trees (`cor.S5` ... `cor.S100`).
pub const STOP_SIZE_PRESETS: [usize; 4] = [5, 10, 25, 100];

// Splits must reduce the summed squared error by more than this (absolute
// part, in s^2) plus a relative part of the parent error.
const MIN_GAIN_ABS: f64 = 1e-18;
const MIN_GAIN_REL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CartError {
    #[error("no training examples")]
    EmptyExamples,
    #[error("schema mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },
    #[error("stop size must be at least 1")]
    InvalidStopSize,
    #[error("non-finite target at example {0}")]
    NonFiniteTarget(usize),
    #[error("tree refers to unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("parse error at byte {position}: {message}")]
    ParseError { position: usize, message: String },
    #[error("tree file has no schema-hash header")]
    SchemaHashMissing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub senone: Senone,
    /// Signed systematic error, seconds.
    pub target: f64,
}

impl TrainingExample {
    pub fn new(senone: Senone, target: f64) -> Self {
        Self { senone, target }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Test {
    /// Categorical equality.
    Is(String),
    /// Numeric `value <= threshold`.
    AtMost(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Question { feature: String, test: Test, yes: Box<Node>, no: Box<Node> },
    Leaf { mean: f64, stddev: f64, count: usize },
}

impl Node {
    fn leaves<'a>(&'a self, out: &mut Vec<&'a Node>) {
        match self {
            Node::Leaf { .. } => out.push(self),
            Node::Question { yes, no, .. } => {
                yes.leaves(out);
                no.leaves(out);
            }
        }
    }

    fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Question { yes, no, .. } => 1 + yes.depth().max(no.depth()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    pub schema_hash: String,
    pub root: Node,
}

impl RegressionTree {
    /// Leaf nodes in depth-first, yes-before-no order.
    pub fn leaves(&self) -> Vec<&Node> {
        let mut out = Vec::new();
        self.root.leaves(&mut out);
        out
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Index (in [`Self::leaves`] order) of the leaf reached by `senone`.
    pub fn leaf_index(&self, senone: &Senone) -> Result<usize, CartError> {
        self.check_schema(senone)?;
        let mut node = &self.root;
        let mut offset = 0;
        loop {
            match node {
                Node::Leaf { .. } => return Ok(offset),
                Node::Question { feature, test, yes, no } => {
                    if answer(senone, feature, test)? {
                        node = yes;
                    } else {
                        offset += yes.leaf_count();
                        node = no;
                    }
                }
            }
        }
    }

    fn check_schema(&self, senone: &Senone) -> Result<(), CartError> {
        if senone.schema_hash() != self.schema_hash {
            return Err(CartError::SchemaMismatch {
                expected: self.schema_hash.clone(),
                found: senone.schema_hash().to_string(),
            });
        }
        Ok(())
    }
}

impl Node {
    fn leaf_count(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Question { yes, no, .. } => yes.leaf_count() + no.leaf_count(),
        }
    }
}

/// Unknown categorical values (and kind mismatches) answer "no".
fn answer(senone: &Senone, feature: &str, test: &Test) -> Result<bool, CartError> {
    let value = senone.get(feature).ok_or_else(|| CartError::UnknownFeature(feature.to_string()))?;
    Ok(match (test, value) {
        (Test::Is(v), FeatureValue::Cat(s)) => s == v,
        (Test::AtMost(t), FeatureValue::Num(n)) => (*n as f64) <= *t,
        _ => false,
    })
}

/// The leaf mean reached by `senone`.
pub fn predict(tree: &RegressionTree, senone: &Senone) -> Result<f64, CartError> {
    tree.check_schema(senone)?;
    let mut node = &tree.root;
    loop {
        match node {
            Node::Leaf { mean, .. } => return Ok(*mean),
            Node::Question { feature, test, yes, no } => {
                node = if answer(senone, feature, test)? { yes } else { no };
            }
        }
    }
}

// --- training -------------------------------------------------------------

/// Count, mean and summed squared deviation of a group of targets.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    mean: f64,
    sse: f64,
}

impl Moments {
    /// Two-pass moments of `values`.
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
        if n == 0 {
            return Self::default();
        }
        let mean = sum / n as f64;
        let sse = values.map(|v| (v - mean) * (v - mean)).sum();
        Self { n, mean, sse }
    }

    /// Pairwise merge of two groups' moments.
    fn merge(self, other: Self) -> Self {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let (na, nb) = (self.n as f64, other.n as f64);
        let delta = other.mean - self.mean;
        Self {
            n,
            mean: self.mean + delta * nb / n as f64,
            sse: self.sse + other.sse + delta * delta * na * nb / n as f64,
        }
    }
}

enum Column {
    Cat { codes: Vec<u32>, values: Vec<String> },
    Num(Vec<i64>),
}

struct Split {
    feature: usize,
    test: Test,
    score: f64,
}

struct Trainer<'a> {
    columns: Vec<Column>,
    names: Vec<String>,
    targets: Vec<f64>,
    stop_size: usize,
    _examples: std::marker::PhantomData<&'a ()>,
}

impl Trainer<'_> {
    fn build(&self, idx: Vec<usize>) -> Node {
        let parent = Moments::of(idx.iter().map(|&i| self.targets[i]));
        if let Some(split) = self.best_split(&idx, parent) {
            let gain = parent.sse - split.score;
            if gain > MIN_GAIN_ABS + MIN_GAIN_REL * parent.sse {
                let (yes, no): (Vec<usize>, Vec<usize>) =
                    idx.iter().partition(|&&i| self.goes_yes(split.feature, &split.test, i));
                return Node::Question {
                    feature: self.names[split.feature].clone(),
                    test: split.test,
                    yes: Box::new(self.build(yes)),
                    no: Box::new(self.build(no)),
                };
            }
        }
        let sum: f64 = idx.iter().map(|&i| self.targets[i]).sum();
        let mean = sum / idx.len() as f64;
        let sse: f64 = idx.iter().map(|&i| (self.targets[i] - mean).powi(2)).sum();
        Node::Leaf { mean, stddev: (sse / idx.len() as f64).sqrt(), count: idx.len() }
    }

    fn goes_yes(&self, feature: usize, test: &Test, i: usize) -> bool {
        match (&self.columns[feature], test) {
            (Column::Cat { codes, values }, Test::Is(v)) => values[codes[i] as usize] == *v,
            (Column::Num(col), Test::AtMost(t)) => (col[i] as f64) <= *t,
            _ => false,
        }
    }

    fn best_split(&self, idx: &[usize], parent: Moments) -> Option<Split> {
        let tie = MIN_GAIN_REL * parent.sse;
        let mut best: Option<Split> = None;
        let mut consider = |cand: Split| {
            if best.as_ref().is_none_or(|b| cand.score < b.score - tie) {
                best = Some(cand);
            }
        };
        for (f, column) in self.columns.iter().enumerate() {
            match column {
                Column::Cat { codes, values } => {
                    let groups = self.cat_groups(idx, codes, values.len());
                    for (k, &(code, yes)) in groups.iter().enumerate() {
                        let no = groups
                            .iter()
                            .enumerate()
                            .filter(|(j, _)| *j != k)
                            .fold(Moments::default(), |acc, (_, g)| acc.merge(g.1));
                        if yes.n < self.stop_size || no.n < self.stop_size {
                            continue;
                        }
                        consider(Split {
                            feature: f,
                            test: Test::Is(values[code as usize].clone()),
                            score: yes.sse + no.sse,
                        });
                    }
                }
                Column::Num(col) => {
                    let groups = self.num_groups(idx, col);
                    if groups.len() < 2 {
                        continue;
                    }
                    let mut suffix = vec![Moments::default(); groups.len() + 1];
                    for k in (0..groups.len()).rev() {
                        suffix[k] = groups[k].1.merge(suffix[k + 1]);
                    }
                    let mut prefix = Moments::default();
                    for k in 0..groups.len() - 1 {
                        prefix = prefix.merge(groups[k].1);
                        let no = suffix[k + 1];
                        if prefix.n < self.stop_size || no.n < self.stop_size {
                            continue;
                        }
                        let threshold = (groups[k].0 as f64 + groups[k + 1].0 as f64) / 2.0;
                        consider(Split { feature: f, test: Test::AtMost(threshold), score: prefix.sse + no.sse });
                    }
                }
            }
        }
        best
    }

    /// Observed category codes in ascending (lexicographic) order with their moments.
    fn cat_groups(&self, idx: &[usize], codes: &[u32], cardinality: usize) -> Vec<(u32, Moments)> {
        let mut members: Vec<Vec<f64>> = vec![Vec::new(); cardinality];
        for &i in idx {
            members[codes[i] as usize].push(self.targets[i]);
        }
        members
            .into_iter()
            .enumerate()
            .filter(|(_, m)| !m.is_empty())
            .map(|(c, m)| (c as u32, Moments::of(m.iter().copied())))
            .collect()
    }

    /// Distinct numeric values in ascending order with their moments.
    fn num_groups(&self, idx: &[usize], col: &[i64]) -> Vec<(i64, Moments)> {
        let mut members: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
        for &i in idx {
            members.entry(col[i]).or_default().push(self.targets[i]);
        }
        members.into_iter().map(|(v, m)| (v, Moments::of(m.iter().copied()))).collect()
    }
}

/// Grow a regression tree with minimum leaf size `stop_size`.
pub fn train(examples: &[TrainingExample], stop_size: usize) -> Result<RegressionTree, CartError> {
    let first = examples.first().ok_or(CartError::EmptyExamples)?;
    if stop_size == 0 {
        return Err(CartError::InvalidStopSize);
    }
    let schema = first.senone.schema().clone();
    for (i, ex) in examples.iter().enumerate() {
        if ex.senone.schema_hash() != schema.hash() {
            return Err(CartError::SchemaMismatch {
                expected: schema.hash().to_string(),
                found: ex.senone.schema_hash().to_string(),
            });
        }
        if !ex.target.is_finite() {
            return Err(CartError::NonFiniteTarget(i));
        }
    }

    let mut columns = Vec::with_capacity(schema.len());
    for (f, def) in schema.features().iter().enumerate() {
        let column = match def.kind {
            FeatureKind::Categorical => {
                let mut values: Vec<String> = examples
                    .iter()
                    .filter_map(|e| e.senone.values()[f].as_cat().map(str::to_string))
                    .collect();
                values.sort();
                values.dedup();
                let codes = examples
                    .iter()
                    .map(|e| {
                        let v = e.senone.values()[f].as_cat().unwrap_or_default();
                        values.binary_search_by(|x| x.as_str().cmp(v)).unwrap_or(0) as u32
                    })
                    .collect();
                Column::Cat { codes, values }
            }
            FeatureKind::Numeric => {
                Column::Num(examples.iter().map(|e| e.senone.values()[f].as_num().unwrap_or(0)).collect())
            }
        };
        columns.push(column);
    }

    let trainer = Trainer {
        columns,
        names: schema.features().iter().map(|d| d.name.clone()).collect(),
        targets: examples.iter().map(|e| e.target).collect(),
        stop_size,
        _examples: std::marker::PhantomData,
    };
    let root = trainer.build((0..examples.len()).collect());
    Ok(RegressionTree { schema_hash: schema.hash().to_string(), root })
}

// --- evaluation -----------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeMetrics {
    pub rmse: f64,
    pub correlation: f64,
    pub mean_error: f64,
    pub mean_abs_error: f64,
}

/// Error statistics of `tree` on `examples`, with errors taken as
/// prediction minus target.
pub fn evaluate(tree: &RegressionTree, examples: &[TrainingExample]) -> Result<TreeMetrics, CartError> {
    if examples.is_empty() {
        return Err(CartError::EmptyExamples);
    }
    let predictions = examples
        .iter()
        .map(|e| predict(tree, &e.senone))
        .collect::<Result<Vec<f64>, _>>()?;
    let targets: Vec<f64> = examples.iter().map(|e| e.target).collect();
    Ok(metrics(&predictions, &targets))
}

/// Metrics of paired predictions and targets (same length, nonempty).
pub fn metrics(predictions: &[f64], targets: &[f64]) -> TreeMetrics {
    let n = predictions.len() as f64;
    let diffs = predictions.iter().zip(targets).map(|(p, t)| p - t);
    let mean_error = diffs.clone().sum::<f64>() / n;
    let mean_abs_error = diffs.clone().map(f64::abs).sum::<f64>() / n;
    let rmse = (diffs.map(|d| d * d).sum::<f64>() / n).sqrt();
    TreeMetrics { rmse, correlation: pearson(predictions, targets), mean_error, mean_abs_error }
}

/// Pearson correlation; zero when either side has no variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    // Constant inputs leave rounding residue in the two-pass sums, so test
    // for them directly.
    let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if xs.is_empty() || constant(xs) || constant(ys) {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

// --- text format ----------------------------------------------------------

pub fn serialize_tree(tree: &RegressionTree) -> String {
    let mut out = format!(";; schema-hash {}\n", tree.schema_hash);
    write_node(&tree.root, 0, &mut out);
    out.push('\n');
    out
}

fn write_node(node: &Node, indent: usize, out: &mut String) {
    match node {
        Node::Leaf { mean, stddev, count } => {
            let _ = write!(out, "(({mean:.6} {stddev:.6} {count}))");
        }
        Node::Question { feature, test, yes, no } => {
            let (op, value) = match test {
                Test::Is(v) => ("is", quote(v)),
                Test::AtMost(t) => ("<=", format!("{t:.6}")),
            };
            let _ = write!(out, "(({} {op} {value})", quote(feature));
            for child in [yes, no] {
                out.push('\n');
                out.push_str(&" ".repeat(indent + 1));
                write_node(child, indent + 1, out);
            }
            out.push(')');
        }
    }
}

fn needs_quotes(s: &str) -> bool {
    s.is_empty() || s.chars().any(|c| c.is_whitespace() || matches!(c, '(' | ')' | '"' | ';' | '\\'))
}

fn quote(s: &str) -> String {
    if !needs_quotes(s) {
        return s.to_string();
    }
    let mut q = String::with_capacity(s.len() + 2);
    q.push('"');
    for c in s.chars() {
        if matches!(c, '"' | '\\') {
            q.push('\\');
        }
        q.push(c);
    }
    q.push('"');
    q
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Open,
    Close,
    Atom(String),
}

fn tokenize(text: &str, base: usize) -> Result<Vec<(usize, Token)>, CartError> {
    let mut tokens = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            ';' => {
                while chars.next_if(|&(_, c)| c != '\n').is_some() {}
            }
            '(' => {
                chars.next();
                tokens.push((base + pos, Token::Open));
            }
            ')' => {
                chars.next();
                tokens.push((base + pos, Token::Close));
            }
            '"' => {
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some((_, '"')) => break,
                        Some((_, '\\')) => match chars.next() {
                            Some((_, e)) => s.push(e),
                            None => return Err(parse_error(base + text.len(), "unterminated escape")),
                        },
                        Some((_, ch)) => s.push(ch),
                        None => return Err(parse_error(base + pos, "unterminated string")),
                    }
                }
                tokens.push((base + pos, Token::Atom(s)));
            }
            _ => {
                let mut s = String::new();
                while let Some((_, ch)) =
                    chars.next_if(|&(_, ch)| !(ch.is_whitespace() || matches!(ch, '(' | ')' | '"' | ';')))
                {
                    s.push(ch);
                }
                tokens.push((base + pos, Token::Atom(s)));
            }
        }
    }
    Ok(tokens)
}

fn parse_error(position: usize, message: &str) -> CartError {
    CartError::ParseError { position, message: message.to_string() }
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn next(&mut self) -> Result<(usize, Token), CartError> {
        let t = self.tokens.get(self.pos).cloned().ok_or_else(|| parse_error(self.end, "unexpected end of input"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, want: Token) -> Result<(), CartError> {
        let (p, t) = self.next()?;
        if t != want {
            return Err(parse_error(p, &format!("expected {want:?}")));
        }
        Ok(())
    }

    fn atoms(&mut self) -> Result<Vec<(usize, String)>, CartError> {
        let mut out = Vec::new();
        loop {
            match self.next()? {
                (_, Token::Close) => return Ok(out),
                (p, Token::Atom(a)) => out.push((p, a)),
                (p, Token::Open) => return Err(parse_error(p, "unexpected '('")),
            }
        }
    }

    fn node(&mut self) -> Result<Node, CartError> {
        self.expect(Token::Open)?;
        let (head_pos, _) = self.tokens.get(self.pos).cloned().ok_or_else(|| parse_error(self.end, "unexpected end of input"))?;
        self.expect(Token::Open)?;
        let head = self.atoms()?;
        let is_leaf = matches!(self.tokens.get(self.pos), Some((_, Token::Close)));
        if is_leaf {
            self.pos += 1;
            let [(p0, mean), (p1, stddev), (p2, count)] = head.as_slice() else {
                return Err(parse_error(head_pos, "leaf must be (mean stddev count)"));
            };
            return Ok(Node::Leaf {
                mean: number(*p0, mean)?,
                stddev: number(*p1, stddev)?,
                count: count.parse().map_err(|_| parse_error(*p2, "bad count"))?,
            });
        }
        let [(_, feature), (p1, op), (p2, value)] = head.as_slice() else {
            return Err(parse_error(head_pos, "question must be (feature op value)"));
        };
        let test = match op.as_str() {
            "is" => Test::Is(value.clone()),
            "<=" => Test::AtMost(number(*p2, value)?),
            _ => return Err(parse_error(*p1, "unknown operator")),
        };
        let yes = self.node()?;
        let no = self.node()?;
        self.expect(Token::Close)?;
        Ok(Node::Question { feature: feature.clone(), test, yes: Box::new(yes), no: Box::new(no) })
    }
}

fn number(pos: usize, s: &str) -> Result<f64, CartError> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| parse_error(pos, "bad number"))
}

pub fn parse_tree(text: &str) -> Result<RegressionTree, CartError> {
    let mut schema_hash = None;
    let mut body_start = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            body_start += line.len();
            continue;
        }
        let Some(comment) = trimmed.strip_prefix(";;") else { break };
        if let Some(hash) = comment.trim().strip_prefix("schema-hash") {
            let hash = hash.trim();
            if !hash.is_empty() {
                schema_hash = Some(hash.to_string());
            }
        }
        body_start += line.len();
    }
    let schema_hash = schema_hash.ok_or(CartError::SchemaHashMissing)?;
    let tokens = tokenize(&text[body_start..], body_start)?;
    let mut parser = Parser { tokens, pos: 0, end: text.len() };
    let root = parser.node()?;
    if let Some((p, _)) = parser.tokens.get(parser.pos) {
        return Err(parse_error(*p, "trailing input"));
    }
    Ok(RegressionTree { schema_hash, root })
}
