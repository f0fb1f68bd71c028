mod common;

use common::model::{batch_loss, gradient_check, rel_err, spread_params, toy_batch, toy_config};
use esco_pretrain::model::linalg::Mat;
use esco_pretrain::model::{
    adamw_scalar, batch_gradients, forward, loss, AdamWConfig, Checkpoint, MlmReduction, ModelConfig, OptimizerState,
    Parameters, Schedule,
};
use esco_pretrain::par::Exec;
use esco_pretrain::rng;
use esco_pretrain::sampler::Relation;
use esco_pretrain::tokenizer::{CLS, SEP};
use proptest::prelude::*;

#[test]
fn analytic_gradients_match_central_differences() {
    for reduction in [MlmReduction::Mean, MlmReduction::Sum] {
        let probes = gradient_check(3, 40, reduction);
        for (i, a, fd) in probes {
            assert!(rel_err(a, fd) < 1e-4, "param {i}: analytic {a} vs fd {fd}");
        }
    }
}

#[test]
fn gradients_on_every_tensor_kind() {
    let params = spread_params(8);
    let batch = toy_batch(9);
    let (_, grads) = batch_gradients(&params, &batch, MlmReduction::Mean, None, Exec::Sequential).unwrap();
    let eps = 1e-4;
    for (name, span) in params.layout.named() {
        // The largest-magnitude coordinate of each tensor.
        let g = grads.get(span);
        let (k, gmax) = g.iter().enumerate().fold((0, 0.0), |b, (k, x)| if x.abs() > b.1 { (k, x.abs()) } else { b });
        let i = span.offset + k;
        let mut plus = params.clone();
        plus.data[i] += eps;
        let mut minus = params.clone();
        minus.data[i] -= eps;
        let fd = (batch_loss(&plus, &batch, MlmReduction::Mean) - batch_loss(&minus, &batch, MlmReduction::Mean)) / (2.0 * eps);
        if gmax < 1e-12 {
            // Key biases shift every score of a query equally and cancel in
            // the softmax.
            assert!(fd.abs() < 1e-9, "{name}: zero analytic gradient vs fd {fd}");
        } else {
            assert!(rel_err(grads.data[i], fd) < 1e-4, "{name}: {} vs {fd}", grads.data[i]);
        }
    }
}

#[test]
fn gradients_independent_of_exec() {
    let params = Parameters::init(toy_config(), &mut rng::from_seed(4)).unwrap();
    let batch = toy_batch(5);
    let a = batch_gradients(&params, &batch, MlmReduction::Mean, None, Exec::Sequential).unwrap();
    let b = batch_gradients(&params, &batch, MlmReduction::Mean, None, Exec::Parallel).unwrap();
    assert_eq!(a.1, b.1);
    assert_eq!(a.0, b.0);
}

#[test]
fn init_statistics() {
    let cfg = ModelConfig { vocab_size: 400, hidden_dim: 32, ..toy_config() };
    let p = Parameters::init(cfg, &mut rng::from_seed(1)).unwrap();
    let w = p.get(p.layout.tok_emb);
    assert!(w.len() >= 10_000);
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (w.len() - 1) as f64;
    assert!((var.sqrt() - 0.02).abs() < 0.002, "std {}", var.sqrt());
    for l in &p.layout.layers {
        assert!(p.get(l.bq).iter().all(|&x| x == 0.0));
        assert!(p.get(l.ln1_g).iter().all(|&x| x == 1.0));
    }
}

#[test]
fn zero_layer_model_is_linear_in_embeddings() {
    let cfg = ModelConfig {
        vocab_size: 7,
        max_len: 3,
        layers: 0,
        hidden_dim: 2,
        heads: 1,
        ffn_dim: 1,
        dropout: 0.0,
    };
    let mut p = Parameters::init(cfg, &mut rng::from_seed(0)).unwrap();
    let l = p.layout.clone();
    let tok: Vec<f64> = (0..14).map(|i| i as f64 * 0.1).collect();
    p.get_mut(l.tok_emb).copy_from_slice(&tok);
    p.get_mut(l.pos_emb).copy_from_slice(&[1.0, 0.0, 0.0, 1.0, 0.5, 0.5]);
    p.get_mut(l.erp_w).copy_from_slice(&[1.0, 0.0, 0.0, 1.0, 1.0, -1.0]);
    p.get_mut(l.erp_b).copy_from_slice(&[0.0, 0.1, 0.2]);
    let ids = [CLS, 6, SEP];
    let out = forward(&p, &ids).unwrap();
    // h_0 = tok[0] + pos[0] = (0, 0.1) + (1, 0) = (1, 0.1)
    assert_eq!(out.hidden_states.row(0), &[1.0, 0.1]);
    // h_1 = tok[6] + pos[1] = (1.2, 1.3) + (0, 1)
    assert!((out.hidden_states.row(1)[0] - 1.2).abs() < 1e-15);
    assert!((out.hidden_states.row(1)[1] - 2.3).abs() < 1e-15);
    let e = out.erp_logits;
    assert!((e[0] - 1.0).abs() < 1e-15);
    assert!((e[1] - 0.2).abs() < 1e-15);
    assert!((e[2] - 1.1).abs() < 1e-15);
    // MLM logits are mlm_w · h + mlm_b, row by row.
    let w = p.get(l.mlm_w);
    for v in 0..7 {
        let h = out.hidden_states.row(2);
        let expected = w[2 * v] * h[0] + w[2 * v + 1] * h[1];
        assert!((out.mlm_logits.row(2)[v] - expected).abs() < 1e-15);
    }
}

#[test]
fn permutation_equivariance_without_positions() {
    let mut p = Parameters::init(toy_config(), &mut rng::from_seed(2)).unwrap();
    let pos = p.layout.pos_emb;
    p.get_mut(pos).fill(0.0);
    let ids = [CLS, 9, 10, 11, SEP, 12, 13, SEP];
    let perm = [0, 3, 1, 2, 4, 6, 5, 7];
    let permuted: Vec<u32> = perm.iter().map(|&i| ids[i]).collect();
    let a = forward(&p, &ids).unwrap();
    let b = forward(&p, &permuted).unwrap();
    for (t, &src) in perm.iter().enumerate() {
        for (x, y) in b.hidden_states.row(t).iter().zip(a.hidden_states.row(src)) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn probabilities_normalize() {
    let p = Parameters::init(toy_config(), &mut rng::from_seed(6)).unwrap();
    let out = forward(&p, &[CLS, 7, 8, SEP, 9, SEP]).unwrap();
    for t in 0..out.mlm_logits.rows {
        let s: f64 = esco_pretrain::model::linalg::softmax(out.mlm_logits.row(t)).iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }
    let s: f64 = esco_pretrain::model::linalg::softmax(&out.erp_logits).iter().sum();
    assert!((s - 1.0).abs() < 1e-9);
}

#[test]
fn loss_decomposes() {
    let p = Parameters::init(toy_config(), &mut rng::from_seed(6)).unwrap();
    for inst in toy_batch(12) {
        let out = forward(&p, &inst.input_ids).unwrap();
        let l = loss(&out, &inst.mlm_labels, inst.erp_label);
        assert_eq!(l.total, l.mlm + l.erp);
        assert!(l.mlm >= 0.0 && l.erp >= 0.0);
    }
}

#[test]
fn uniform_loss_identities() {
    let out = esco_pretrain::model::ForwardOutput {
        hidden_states: Mat::zeros(3, 1),
        mlm_logits: Mat::zeros(3, 10),
        erp_logits: [0.0; 3],
    };
    let l = loss(&out, &[Some(5), None, Some(7)], Relation::Linked);
    assert!((l.mlm - std::f64::consts::LN_10).abs() < 1e-12);
    assert!((l.erp - 1.0986122886681098).abs() < 1e-12);
}

#[test]
fn adamw_matches_hand_update_on_scalar() {
    // Two steps on f(p) = p² / 2 from p = 1, lr 0.01, with and without decay.
    for wd in [0.0, 0.1] {
        let cfg = AdamWConfig { weight_decay: wd, ..AdamWConfig::default() };
        let (mut m, mut v) = (0.0, 0.0);
        let mut p = 1.0f64;
        let (mut hm, mut hv, mut hp) = (0.0f64, 0.0f64, 1.0f64);
        for t in 1..=2 {
            let g = p;
            p = adamw_scalar(p, g, &mut m, &mut v, t, 0.01, &cfg, true);
            // Hand execution.
            let hg = hp;
            hm = 0.9 * hm + 0.1 * hg;
            hv = 0.98 * hv + 0.02 * hg * hg;
            let mh = hm / (1.0 - 0.9f64.powi(t as i32));
            let vh = hv / (1.0 - 0.98f64.powi(t as i32));
            hp = hp * (1.0 - 0.01 * wd) - 0.01 * mh / (vh.sqrt() + 1e-6);
            assert!((p - hp).abs() < 1e-12, "wd {wd} step {t}");
        }
    }
}

#[test]
fn optimizer_refuses_past_schedule_end() {
    let p = Parameters::init(toy_config(), &mut rng::from_seed(1)).unwrap();
    let mut q = p.clone();
    let mut st = OptimizerState::new(&p, Schedule::new(1e-3, 2), AdamWConfig::default()).unwrap();
    let g = esco_pretrain::model::Gradients::zeros(p.len());
    st.apply(&mut q, &g).unwrap();
    st.apply(&mut q, &g).unwrap();
    assert!(matches!(
        st.apply(&mut q, &g),
        Err(esco_pretrain::model::ModelError::ScheduleExhausted { step: 2, total: 2 })
    ));
}

#[test]
fn biases_are_not_decayed() {
    let p = Parameters::init(toy_config(), &mut rng::from_seed(1)).unwrap();
    let mut q = p.clone();
    let l = q.layout.clone();
    q.get_mut(l.layers[0].bq).fill(0.5);
    q.get_mut(l.layers[0].ln1_g).fill(2.0);
    let before = q.clone();
    let mut st = OptimizerState::new(&q, Schedule::new(1e-2, 10), AdamWConfig { weight_decay: 0.5, ..Default::default() }).unwrap();
    st.apply(&mut q, &esco_pretrain::model::Gradients::zeros(p.len())).unwrap();
    assert_eq!(q.get(l.layers[0].bq), before.get(l.layers[0].bq));
    assert_eq!(q.get(l.layers[0].ln1_g), before.get(l.layers[0].ln1_g));
    assert_ne!(q.get(l.tok_emb), before.get(l.tok_emb));
}

#[test]
fn checkpoint_bytes_round_trip() {
    let store = esco_pretrain::synth::synthetic_taxonomy(&esco_pretrain::synth::SynthConfig::default());
    let run = esco_pretrain::model::RunConfig {
        steps: 3,
        batch_size: 4,
        log_every: 2,
        exec: Exec::Sequential,
        ..Default::default()
    };
    let model = ModelConfig { max_len: 40, layers: 1, hidden_dim: 8, heads: 2, ffn_dim: 8, ..ModelConfig::default() };
    let out = esco_pretrain::model::pretrain(&store, &Default::default(), model, &run).unwrap();
    let bytes = out.checkpoint.to_bytes().unwrap();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back, out.checkpoint);
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    assert!(Checkpoint::from_bytes(b"nonsense-bytes-here!").is_err());
    assert_eq!(out.logs.iter().map(|r| r.step).collect::<Vec<_>>(), vec![2, 3]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn schedule_is_continuous_and_peaks_once(total in 1usize..3000, peak in 1e-5f64..1e-2) {
        let s = Schedule::new(peak, total);
        let w = s.warmup_steps();
        prop_assert_eq!(s.lr(w), peak);
        if total > 1 {
            prop_assert_eq!(s.lr(total), 0.0);
        }
        let max_jump = peak / w.min(total.saturating_sub(w).max(1)) as f64 + 1e-15;
        let mut peaks = 0;
        for k in 1..=total {
            prop_assert!((s.lr(k) - s.lr(k - 1)).abs() <= max_jump * (1.0 + 1e-9));
            if s.lr(k) == peak {
                peaks += 1;
            }
        }
        prop_assert_eq!(peaks, 1);
    }
}
