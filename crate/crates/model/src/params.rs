use std::collections::BTreeMap;

use treeattn_core::{Mat, SeededRng, Tape, Var};

use crate::config::{AttentionMode, DecoderMode, ModelConfig};

/// Target embedding; also serves as the output projection.
pub const TARGET_EMBEDDING: &str = "dec.embed";

/// Named parameter tensors, kept in name order so iteration (and therefore
/// initialization and serialization) is deterministic.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    tensors: BTreeMap<String, Mat>,
}

/// Shapes of every parameter a configuration needs.
pub fn parameter_shapes(config: &ModelConfig) -> BTreeMap<String, (usize, usize)> {
    let d = config.dim;
    let h = config.half();
    let mut shapes = BTreeMap::new();
    let mut add = |name: String, rows: usize, cols: usize| {
        shapes.insert(name, (rows, cols));
    };
    add("enc.embed".into(), config.src_vocab_size, d);
    for l in 0..config.layers {
        for dir in ["fwd", "bwd"] {
            add(format!("enc.l{}.{}.w", l, dir), 4 * h, d + h);
            add(format!("enc.l{}.{}.b", l, dir), 4 * h, 1);
        }
        for part in ["h", "c"] {
            add(format!("dec.init.l{}.{}.w", l, part), d, d);
            add(format!("dec.init.l{}.{}.b", l, part), d, 1);
        }
        let input = if l == 0 { 2 * d } else { d };
        add(format!("dec.l{}.w", l), 4 * d, input + d);
        add(format!("dec.l{}.b", l), 4 * d, 1);
    }
    if config.mode.attention() != AttentionMode::None {
        for name in ["attn.query", "attn.key", "attn.value"] {
            add(name.into(), d, d);
        }
    }
    add(TARGET_EMBEDDING.into(), config.tgt_vocab_size, d);
    add("dec.vocab.b".into(), config.tgt_vocab_size, 1);
    add("dec.attn.w".into(), d, d);
    let decoder = config.mode.decoder();
    match decoder {
        DecoderMode::Baseline | DecoderMode::OneSet => {}
        DecoderMode::Shared | DecoderMode::Separate | DecoderMode::HardShared => {
            add("dec.gate.w".into(), d, d);
        }
    }
    if decoder == DecoderMode::Separate {
        add("dec.syn_attn.w".into(), d, d);
    }
    if decoder == DecoderMode::OneSet {
        add("enc.fuse.w".into(), d, d);
    }
    let g_inputs = match decoder {
        DecoderMode::Baseline | DecoderMode::OneSet => 2 * d,
        _ => 3 * d,
    };
    add("dec.out.w".into(), d, g_inputs);
    add("dec.out.b".into(), d, 1);
    shapes
}

/// FNV-1a hash of a parameter name.
fn name_stream(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

impl ParamStore {
    /// Uniform initialization in `[-init_range, init_range]`. Each tensor
    /// draws from its own stream keyed by name, so tensors common to two
    /// modes start out identical under the same seed.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let r = config.init_range;
        let tensors = parameter_shapes(config)
            .into_iter()
            .map(|(name, (rows, cols))| {
                let mut rng = SeededRng::derive(seed, name_stream(&name));
                let value = Mat::from_vec(rows, cols, rng.uniform_vec(rows * cols, -r, r));
                (name, value)
            })
            .collect();
        ParamStore { tensors }
    }

    pub fn from_map(tensors: BTreeMap<String, Mat>) -> Self {
        ParamStore { tensors }
    }

    pub fn get(&self, name: &str) -> Option<&Mat> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Mat> {
        self.tensors.get_mut(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Mat) {
        self.tensors.insert(name.into(), value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Mat)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Mat)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(|m| m.len()).sum()
    }

    pub fn target_embedding(&self) -> &Mat {
        &self.tensors[TARGET_EMBEDDING]
    }

    /// The output layer's weight matrix. Tied to the target embedding, so
    /// this is the very same tensor.
    pub fn output_projection(&self) -> &Mat {
        self.target_embedding()
    }

    /// Registers every parameter on `tape`.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|(name, value)| {
                let var = if requires_grad {
                    tape.param(value.clone())
                } else {
                    tape.constant(value.clone())
                };
                (name.clone(), var)
            })
            .collect();
        Bound { vars }
    }
}

/// Parameters registered on a tape.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Var {
        match self.vars.get(name) {
            Some(&v) => v,
            None => panic!("parameter '{}' is not part of this model", name),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}
