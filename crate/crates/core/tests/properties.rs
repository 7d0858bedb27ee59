//! Cross-module invariants as property tests.

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use twostream::augment::{
    apply_crop, corner_offsets, crop_space, flip_input, sample_crop, CanvasSpec, InputKind,
};
use twostream::eval::average_scores;
use twostream::flow::{build_stack, dequantize_value, quantize_value, FlowField, STACK_FRAMES};
use twostream::model::{adapt_first_layer, build_toy_model, ModelConfig, Stream};
use twostream::ops::{
    conv2d_forward, dropout_apply, softmax_cross_entropy, ConvParams, DropoutMode, DropoutState, MaskKey,
};
use twostream::schedule::StepSchedule;
use twostream::trainer::{
    activation_traffic_bytes, average_gradients, comm_volume, data_parallel_step, fc_sync_bytes, split_batch,
    train_step, Batch, CostFactor, Optimizer, SyncMode, SyncPolicy, WorkerGrads,
};
use twostream::Tensor;

fn tensor(shape: Vec<usize>) -> impl Strategy<Value = Tensor> {
    let n = shape.iter().product::<usize>();
    prop::collection::vec(-3.0f64..3.0, n).prop_map(move |d| Tensor::new(shape.clone(), d).unwrap())
}

fn canvas() -> impl Strategy<Value = CanvasSpec> {
    (8usize..40, 8usize..40).prop_flat_map(|(w, h)| {
        let m = w.min(h);
        (prop::collection::vec(1..=m, 1..4), 1..=m).prop_map(move |(scales, out)| CanvasSpec {
            width: w,
            height: h,
            scale_set: scales,
            out_size: out,
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inference_dropout_is_identity(x in tensor(vec![3, 7]), ratio in 0.0f64..0.99) {
        let state = DropoutState { ratio, mode: DropoutMode::Inference };
        let (y, mask) = dropout_apply(&x, &state).unwrap();
        prop_assert_eq!(y, x);
        prop_assert!(mask.is_none());
    }

    #[test]
    fn train_dropout_is_deterministic(x in tensor(vec![4, 9]), seed in any::<u64>(), it in 0u64..1000) {
        let state = DropoutState {
            ratio: 0.5,
            mode: DropoutMode::Train(MaskKey { seed, layer: 2, iteration: it, first_sample: 0 }),
        };
        prop_assert_eq!(dropout_apply(&x, &state).unwrap(), dropout_apply(&x, &state).unwrap());
    }

    #[test]
    fn cross_entropy_shift_invariant(x in tensor(vec![3, 5]), shift in -50.0f64..50.0, label in 0usize..5) {
        let labels = vec![label, (label + 1) % 5, (label + 3) % 5];
        let (l0, g0) = softmax_cross_entropy(&x, &labels).unwrap();
        let (l1, g1) = softmax_cross_entropy(&x.map(|v| v + shift), &labels).unwrap();
        prop_assert!((l0 - l1).abs() <= 1e-12 * l0.abs().max(1.0));
        prop_assert!(g0.max_abs_diff(&g1) <= 1e-12);
    }

    #[test]
    fn delta_kernel_conv_is_identity(k in prop::sample::select(vec![1usize, 3, 5]), x in tensor(vec![2, 3, 6, 7])) {
        let w = Tensor::from_fn(&[3, 3, k, k], |i| {
            let (o, c, r) = (i / (3 * k * k), (i / (k * k)) % 3, i % (k * k));
            if o == c && r == (k / 2) * k + k / 2 { 1.0 } else { 0.0 }
        });
        let p = ConvParams::new(w, Tensor::zeros(&[3]), 1, (k - 1) / 2).unwrap();
        let y = conv2d_forward(&x, &p).unwrap();
        prop_assert_eq!(&y, &x);
        prop_assert_eq!(conv2d_forward(&x, &p).unwrap(), y);
    }

    #[test]
    fn corner_offsets_in_bounds(cw in 1usize..400, ch in 1usize..400, fw in 1usize..400, fh in 1usize..400) {
        match corner_offsets(cw, ch, fw, fh) {
            Ok(offsets) => {
                prop_assert_eq!(offsets.len(), 5);
                for (x, y) in offsets {
                    prop_assert!(x + fw <= cw && y + fh <= ch);
                }
            }
            Err(_) => prop_assert!(fw > cw || fh > ch),
        }
    }

    #[test]
    fn sampled_crops_reproducible_and_enumerable(c in canvas(), seed in any::<u64>()) {
        let cs = sample_crop(&c, seed);
        prop_assert_eq!(cs, sample_crop(&c, seed));
        prop_assert!(crop_space(&c).contains(&cs));
    }

    #[test]
    fn flip_is_an_involution(x in tensor(vec![4, 5, 6]), q in prop::collection::vec(0u8..=255, 4 * 5 * 6)) {
        prop_assert_eq!(flip_input(&flip_input(&x, InputKind::Rgb).unwrap(), InputKind::Rgb).unwrap(), x);
        let stack = Tensor::new(vec![4, 5, 6], q.into_iter().map(f64::from).collect()).unwrap();
        let twice = flip_input(&flip_input(&stack, InputKind::FlowStack).unwrap(), InputKind::FlowStack).unwrap();
        prop_assert_eq!(twice, stack);
    }

    #[test]
    fn apply_crop_shape(c in canvas(), seed in any::<u64>(), chans in 1usize..4) {
        let img = Tensor::from_fn(&[chans, c.height, c.width], |i| (i % 256) as f64);
        let cs = sample_crop(&c, seed);
        let out = apply_crop(&img, &cs, &c, InputKind::Rgb).unwrap();
        prop_assert_eq!(out.shape(), &[chans, c.out_size, c.out_size]);
    }

    #[test]
    fn quantizer_monotone(a in -30.0f64..30.0, b in -30.0f64..30.0, bound in 0.5f64..40.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(quantize_value(lo, bound) <= quantize_value(hi, bound));
    }

    #[test]
    fn quantizer_symmetric_off_ties(x in 0.0f64..1.0, bound in 0.5f64..40.0) {
        let x = x * bound;
        let s = (x + bound) * 255.0 / (2.0 * bound);
        prop_assume!((s.fract() - 0.5).abs() > 1e-6);
        prop_assert_eq!(quantize_value(-x, bound), 255 - quantize_value(x, bound));
    }

    #[test]
    fn stack_has_twenty_channels_and_round_trips(
        vals in prop::collection::vec(-1.0f64..1.0, STACK_FRAMES * 2 * 12),
        bound in 1.0f64..30.0,
    ) {
        let fields: Vec<FlowField> = vals
            .chunks(24)
            .map(|c| {
                let u = Tensor::new(vec![3, 4], c[..12].iter().map(|v| v * bound).collect()).unwrap();
                let v = Tensor::new(vec![3, 4], c[12..].iter().map(|v| v * bound).collect()).unwrap();
                FlowField::new(u, v).unwrap()
            })
            .collect();
        let stack = build_stack(&fields, bound, 0).unwrap();
        prop_assert_eq!(stack.data.shape(), &[20, 3, 4]);
        for (i, f) in fields.iter().enumerate() {
            for (ch, src) in [(2 * i, &f.u), (2 * i + 1, &f.v)] {
                let plane = stack.data.index_outer(ch).unwrap();
                for (q, v) in plane.data().iter().zip(src.data()) {
                    prop_assert!((dequantize_value(*q, bound) - v).abs() <= 2.0 * bound / 255.0);
                }
            }
        }
    }

    #[test]
    fn adapted_layer_channel_constant(w in tensor(vec![3, 3, 2, 2]), target in 1usize..24) {
        let a = adapt_first_layer(&w, target).unwrap();
        prop_assert_eq!(a.shape(), &[3, target, 2, 2]);
        for o in 0..3 {
            let first = a.index_outer(o).unwrap().index_outer(0).unwrap();
            for c in 1..target {
                prop_assert_eq!(&a.index_outer(o).unwrap().index_outer(c).unwrap(), &first);
            }
        }
    }

    #[test]
    fn adapt_identity_on_equal_slices(slice in tensor(vec![2, 1, 3, 3]), c in 1usize..6) {
        let w = Tensor::from_fn(&[2, c, 3, 3], |i| slice.data()[(i / (c * 9)) * 9 + i % 9]);
        prop_assert_eq!(adapt_first_layer(&w, c).unwrap(), w);
    }

    #[test]
    fn lr_piecewise_constant_non_increasing(
        base in 1e-5f64..1.0,
        decay in 0.01f64..0.99,
        step in 1u64..50,
        mult in 1u64..6,
    ) {
        let s = StepSchedule { base_lr: base, decay_factor: decay, step_iters: step, stop_iter: step * mult };
        s.validate().unwrap();
        let mut prev = f64::INFINITY;
        for it in 0..s.stop_iter {
            let lr = s.lr_at(it).unwrap();
            prop_assert!(lr <= prev);
            prop_assert_eq!(lr, s.lr_at(it - it % step).unwrap());
            prev = lr;
        }
        prop_assert_eq!(s.lr_at(s.stop_iter), None);
        prop_assert_eq!(s.distinct_rates(), mult);
    }

    #[test]
    fn gather_cheaper_exactly_when_activations_are(k in 1usize..9, b in 1usize..4096) {
        let layout = twostream::model::vgg16_layout(3, 101, &[0.9, 0.9]).unwrap();
        let cost = CostFactor::RingAllReduce;
        let full = comm_volume(&layout, k, SyncPolicy { mode: SyncMode::FullParamSync, cost }, b, 25_088);
        let gather = comm_volume(&layout, k, SyncPolicy { mode: SyncMode::ActivationGather, cost }, b, 25_088);
        let cheaper = activation_traffic_bytes(k, b, 25_088) < fc_sync_bytes(&layout, k, cost);
        prop_assert_eq!(gather.total() < full.total(), cheaper);
    }

    #[test]
    fn score_mean_permutation_invariant(rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), 1..300), seed in any::<u64>()) {
        let n = rows.len();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = average_scores(&Tensor::new(vec![n, 4], flat).unwrap()).unwrap();
        let b = average_scores(&Tensor::new(vec![n, 4], shuffled.concat()).unwrap()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }
}

fn toy_batch(n: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = Tensor::from_fn(&[n, 3, 10, 10], |_| rand::Rng::random_range(&mut rng, -1.0..1.0));
    Batch::new(inputs, (0..n).map(|i| i % 3).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn data_parallel_matches_single_process(k in prop::sample::select(vec![1usize, 2, 4, 8]), seed in any::<u64>()) {
        let cfg = ModelConfig::toy_with_dropout(Stream::Spatial, 3, (10, 10), 8, &[], seed).unwrap();
        let init = build_toy_model(&cfg).unwrap();
        let batch = toy_batch(16, seed);
        let mut single = init.clone();
        let mut so = Optimizer::new(&single, 0.9, 1e-4);
        train_step(&mut single, &mut so, &batch, 0.05, seed, 0).unwrap();
        let mut multi = init.clone();
        let mut mo = Optimizer::new(&multi, 0.9, 1e-4);
        let shards = split_batch(&batch, k).unwrap();
        data_parallel_step(&mut multi, &mut mo, &shards, 0.05, seed, 0, SyncPolicy::default()).unwrap();
        prop_assert!(multi.params.max_abs_diff(&single.params) < 1e-10);
    }

    #[test]
    fn sync_modes_bit_identical_with_dropout(seed in any::<u64>()) {
        let cfg = ModelConfig::toy_with_dropout(Stream::Spatial, 3, (10, 10), 8, &[0.5, 0.3], seed).unwrap();
        let init = build_toy_model(&cfg).unwrap();
        let mut models = Vec::new();
        for mode in [SyncMode::FullParamSync, SyncMode::ActivationGather] {
            let mut m = init.clone();
            let mut o = Optimizer::new(&m, 0.9, 0.0);
            for it in 0..3 {
                let shards = split_batch(&toy_batch(8, seed ^ it), 4).unwrap();
                data_parallel_step(&mut m, &mut o, &shards, 0.05, seed, it, SyncPolicy { mode, ..Default::default() }).unwrap();
            }
            models.push(m);
        }
        prop_assert_eq!(&models[0].params, &models[1].params);
    }

    #[test]
    fn reduction_ignores_completion_order(seed in any::<u64>(), k in 2usize..6) {
        let cfg = ModelConfig::toy_with_dropout(Stream::Spatial, 3, (10, 10), 8, &[], 1).unwrap();
        let model = build_toy_model(&cfg).unwrap();
        let parts: Vec<WorkerGrads> = (0..k)
            .map(|w| {
                let b = toy_batch(2, seed ^ w as u64);
                let (loss, grads) = model.loss_and_grads(&b.inputs, &b.labels, twostream::model::ForwardMode::Inference).unwrap();
                WorkerGrads { worker_id: w, loss, grads }
            })
            .collect();
        let mut shuffled = parts.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (la, ga) = average_gradients(parts).unwrap();
        let (lb, gb) = average_gradients(shuffled).unwrap();
        prop_assert_eq!(la.to_bits(), lb.to_bits());
        prop_assert_eq!(ga, gb);
    }
}
