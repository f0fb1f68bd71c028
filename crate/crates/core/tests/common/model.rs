use esco_pretrain::masking::{mask_sequence, MaskedInstance, MaskingPolicy};
use esco_pretrain::model::{batch_gradients, evaluate_batch, Init, MlmReduction, ModelConfig, Parameters};
use esco_pretrain::par::Exec;
use esco_pretrain::rng;
use esco_pretrain::sampler::Relation;
use esco_pretrain::tokenizer::{TokenSequence, CLS, PAD, SEP};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

pub fn toy_config() -> ModelConfig {
    ModelConfig {
        vocab_size: 32,
        max_len: 16,
        layers: 2,
        hidden_dim: 16,
        heads: 2,
        ffn_dim: 32,
        dropout: 0.0,
    }
}

pub fn toy_batch(seed: u64) -> Vec<MaskedInstance> {
    let mut r = rng::from_seed(seed);
    let policy = MaskingPolicy { select_rate: 0.4, ..Default::default() };
    (0..3)
        .map(|k| {
            let a = 4 + k;
            let mut ids = vec![CLS];
            ids.extend((0..a).map(|_| r.random_range(5..32u32)));
            ids.push(SEP);
            let boundary = ids.len();
            ids.extend((0..5).map(|_| r.random_range(5..32u32)));
            ids.push(SEP);
            let seq = TokenSequence::new(ids, boundary).unwrap();
            let mut inst = mask_sequence(&seq, 32, &policy, Relation::from_index(k % 3).unwrap(), &mut r);
            if k == 1 {
                inst.input_ids.extend([PAD, PAD]);
                inst.mlm_labels.extend([None, None]);
            }
            inst
        })
        .collect()
}

pub fn batch_loss(params: &Parameters, batch: &[MaskedInstance], reduction: MlmReduction) -> f64 {
    evaluate_batch(params, batch, reduction, Exec::Sequential).unwrap().loss.total
}

/// Random parameters on a wider scale than the initializer, so attention is
/// far from uniform and no coordinate's gradient vanishes.
pub fn spread_params(seed: u64) -> Parameters {
    let mut p = Parameters::init(toy_config(), &mut rng::from_seed(seed)).unwrap();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut r = rng::derive(seed, "spread", 0);
    for (_, span) in p.layout.named() {
        let (base, scale) = match span.init {
            Init::Normal => (0.0, 0.3),
            Init::Zeros => (0.0, 0.1),
            Init::Ones => (1.0, 0.1),
        };
        for x in p.get_mut(span) {
            *x = base + scale * normal.sample(&mut r);
        }
    }
    p
}

/// Relative errors between analytic gradients and central differences at
/// `count` random coordinates.
pub fn gradient_check(seed: u64, count: usize, reduction: MlmReduction) -> Vec<(usize, f64, f64)> {
    let params = spread_params(seed);
    let batch = toy_batch(seed + 1);
    let (_, grads) = batch_gradients(&params, &batch, reduction, None, Exec::Sequential).unwrap();
    let mut r = rng::from_seed(seed + 2);
    let eps = 1e-4;
    (0..count)
        .map(|_| {
            let i = r.random_range(0..params.len());
            let mut plus = params.clone();
            plus.data[i] += eps;
            let mut minus = params.clone();
            minus.data[i] -= eps;
            let fd = (batch_loss(&plus, &batch, reduction) - batch_loss(&minus, &batch, reduction)) / (2.0 * eps);
            (i, grads.data[i], fd)
        })
        .collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}
