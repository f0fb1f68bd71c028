use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ModelError, INIT_STD};
use crate::rng;

/// Shape hyperparameters of the toy encoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub max_len: usize,
    pub layers: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 0,
            max_len: 64,
            layers: 2,
            hidden_dim: 32,
            heads: 4,
            ffn_dim: 64,
            dropout: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        for (name, v) in [
            ("vocab_size", self.vocab_size),
            ("max_len", self.max_len),
            ("hidden_dim", self.hidden_dim),
            ("heads", self.heads),
            ("ffn_dim", self.ffn_dim),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if !self.hidden_dim.is_multiple_of(self.heads) {
            return bad(format!("hidden_dim {} is not divisible by heads {}", self.hidden_dim, self.heads));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.heads
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Init {
    Normal,
    Zeros,
    Ones,
}

/// Location of one tensor inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
}

impl Span {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    /// Weight decay applies to matrices and embeddings only.
    pub fn decays(&self) -> bool {
        self.init == Init::Normal
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpans {
    pub wq: Span,
    pub bq: Span,
    pub wk: Span,
    pub bk: Span,
    pub wv: Span,
    pub bv: Span,
    pub wo: Span,
    pub bo: Span,
    pub ln1_g: Span,
    pub ln1_b: Span,
    pub w1: Span,
    pub b1: Span,
    pub w2: Span,
    pub b2: Span,
    pub ln2_g: Span,
    pub ln2_b: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub tok_emb: Span,
    pub pos_emb: Span,
    pub layers: Vec<LayerSpans>,
    pub mlm_w: Span,
    pub mlm_b: Span,
    pub erp_w: Span,
    pub erp_b: Span,
    pub size: usize,
}

struct Alloc(usize);

impl Alloc {
    fn take(&mut self, rows: usize, cols: usize, init: Init) -> Span {
        let s = Span { offset: self.0, rows, cols, init };
        self.0 += rows * cols;
        s
    }
}

impl Layout {
    pub fn new(c: &ModelConfig) -> Self {
        let (v, d, f) = (c.vocab_size, c.hidden_dim, c.ffn_dim);
        let mut a = Alloc(0);
        let tok_emb = a.take(v, d, Init::Normal);
        let pos_emb = a.take(c.max_len, d, Init::Normal);
        let layers = (0..c.layers)
            .map(|_| LayerSpans {
                wq: a.take(d, d, Init::Normal),
                bq: a.take(1, d, Init::Zeros),
                wk: a.take(d, d, Init::Normal),
                bk: a.take(1, d, Init::Zeros),
                wv: a.take(d, d, Init::Normal),
                bv: a.take(1, d, Init::Zeros),
                wo: a.take(d, d, Init::Normal),
                bo: a.take(1, d, Init::Zeros),
                ln1_g: a.take(1, d, Init::Ones),
                ln1_b: a.take(1, d, Init::Zeros),
                w1: a.take(f, d, Init::Normal),
                b1: a.take(1, f, Init::Zeros),
                w2: a.take(d, f, Init::Normal),
                b2: a.take(1, d, Init::Zeros),
                ln2_g: a.take(1, d, Init::Ones),
                ln2_b: a.take(1, d, Init::Zeros),
            })
            .collect();
        let mlm_w = a.take(v, d, Init::Normal);
        let mlm_b = a.take(1, v, Init::Zeros);
        let erp_w = a.take(3, d, Init::Normal);
        let erp_b = a.take(1, 3, Init::Zeros);
        Self {
            tok_emb,
            pos_emb,
            layers,
            mlm_w,
            mlm_b,
            erp_w,
            erp_b,
            size: a.0,
        }
    }

    /// Every tensor with a dotted name, in storage order.
    pub fn named(&self) -> Vec<(String, Span)> {
        let mut out = vec![("tok_emb".to_owned(), self.tok_emb), ("pos_emb".to_owned(), self.pos_emb)];
        for (i, l) in self.layers.iter().enumerate() {
            let fields = [
                ("wq", l.wq),
                ("bq", l.bq),
                ("wk", l.wk),
                ("bk", l.bk),
                ("wv", l.wv),
                ("bv", l.bv),
                ("wo", l.wo),
                ("bo", l.bo),
                ("ln1_g", l.ln1_g),
                ("ln1_b", l.ln1_b),
                ("w1", l.w1),
                ("b1", l.b1),
                ("w2", l.w2),
                ("b2", l.b2),
                ("ln2_g", l.ln2_g),
                ("ln2_b", l.ln2_b),
            ];
            out.extend(fields.into_iter().map(|(n, s)| (format!("layers.{i}.{n}"), s)));
        }
        out.extend([
            ("mlm_w".to_owned(), self.mlm_w),
            ("mlm_b".to_owned(), self.mlm_b),
            ("erp_w".to_owned(), self.erp_w),
            ("erp_b".to_owned(), self.erp_b),
        ]);
        out
    }
}

/// Encoder weights plus both output heads, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub config: ModelConfig,
    pub layout: Layout,
    pub data: Vec<f64>,
}

impl Parameters {
    /// Weights ~ N(0, 0.02²), biases 0, normalization gains 1.
    pub fn init(config: ModelConfig, rng: &mut rng::Rng) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut data = vec![0.0; layout.size];
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        for (_, span) in layout.named() {
            let slot = &mut data[span.range()];
            match span.init {
                Init::Normal => slot.iter_mut().for_each(|x| *x = normal.sample(rng)),
                Init::Zeros => {}
                Init::Ones => slot.fill(1.0),
            }
        }
        Ok(Self { config, layout, data })
    }

    pub fn from_data(config: ModelConfig, data: Vec<f64>) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        if data.len() != layout.size {
            return Err(ModelError::Shape(format!(
                "expected {} parameters, got {}",
                layout.size,
                data.len()
            )));
        }
        Ok(Self { config, layout, data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, span: Span) -> &[f64] {
        &self.data[span.range()]
    }

    pub fn get_mut(&mut self, span: Span) -> &mut [f64] {
        &mut self.data[span.range()]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Same layout as [`Parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub data: Vec<f64>,
}

impl Gradients {
    pub fn zeros(len: usize) -> Self {
        Self { data: vec![0.0; len] }
    }

    pub fn get(&self, span: Span) -> &[f64] {
        &self.data[span.range()]
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Disjoint mutable views of two spans of one buffer.
pub(crate) fn pair_mut(buf: &mut [f64], a: Span, b: Span) -> (&mut [f64], &mut [f64]) {
    assert!(a.range().end <= b.offset || b.range().end <= a.offset, "spans overlap");
    if a.offset < b.offset {
        let (lo, hi) = buf.split_at_mut(b.offset);
        (&mut lo[a.range()], &mut hi[..b.len()])
    } else {
        let (lo, hi) = buf.split_at_mut(a.offset);
        (&mut hi[..a.len()], &mut lo[b.range()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig { vocab_size: 32, max_len: 16, layers: 2, hidden_dim: 16, heads: 2, ffn_dim: 32, dropout: 0.0 }
    }

    #[test]
    fn layout_is_contiguous() {
        let layout = Layout::new(&cfg());
        let mut next = 0;
        for (name, span) in layout.named() {
            assert_eq!(span.offset, next, "{name}");
            next += span.len();
        }
        assert_eq!(next, layout.size);
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let a = Parameters::init(cfg(), &mut rng::from_seed(4)).unwrap();
        let b = Parameters::init(cfg(), &mut rng::from_seed(4)).unwrap();
        assert_eq!(a, b);
        for (name, span) in a.layout.named() {
            let v = a.get(span);
            match span.init {
                Init::Zeros => assert!(v.iter().all(|&x| x == 0.0), "{name}"),
                Init::Ones => assert!(v.iter().all(|&x| x == 1.0), "{name}"),
                Init::Normal => assert!(v.iter().any(|&x| x != 0.0), "{name}"),
            }
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(ModelConfig { heads: 3, ..cfg() }.validate().is_err());
        assert!(ModelConfig { vocab_size: 0, ..cfg() }.validate().is_err());
        assert!(ModelConfig { dropout: 1.0, ..cfg() }.validate().is_err());
        assert!(ModelConfig { layers: 0, ..cfg() }.validate().is_ok());
    }

    #[test]
    fn pair_mut_either_order() {
        let mut buf: Vec<f64> = (0..10).map(f64::from).collect();
        let a = Span { offset: 1, rows: 1, cols: 2, init: Init::Zeros };
        let b = Span { offset: 6, rows: 1, cols: 3, init: Init::Zeros };
        let (x, y) = pair_mut(&mut buf, b, a);
        assert_eq!(x, &[6.0, 7.0, 8.0]);
        assert_eq!(y, &[1.0, 2.0]);
    }
}
