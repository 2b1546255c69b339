use super::*;
use crate::autodiff::Tape;
use crate::nn::conv2d_forward;
use crate::tensor::{Shape, Tensor};

fn rand_tensor(shape: [usize; 4], seed: u64) -> Tensor<f64> {
    let mut s = seed;
    Tensor::from_fn(shape, |_| {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    })
}

fn store_for<M: Module>(m: &M, seed: u64) -> ParameterStore<f64> {
    let mut s = ParameterStore::new();
    m.init(&mut s, seed).unwrap();
    s.cast()
}

fn zero_all(store: &mut ParameterStore<f64>) {
    for (_, v) in store.iter_mut() {
        v.data_mut().fill(0.0);
    }
}

#[test]
fn default_budget() {
    let cost = count_params_macs(&NetworkConfig::default(), Shape::new(1, 3, 256, 256)).unwrap();
    assert_eq!(cost.params, 1_787_443);
    let net = Network::new(&NetworkConfig::default()).unwrap();
    assert_eq!(net.init_params(0).unwrap().total_count(), cost.params);
    let g = cost.macs as f64 / 1e9;
    assert!((g - 13.67).abs() / 13.67 < 0.2, "{g}");
}

#[test]
fn small_conv_counts() {
    let c = Conv::new("c", crate::nn::ConvSpec::new(3, 36, 3, 3));
    assert_eq!(c.param_count(), 1008);
    let dw = crate::nn::ConvSpec::depthwise(144, 31, 1);
    assert_eq!(dw.param_count(), 31 * 144 + 144);
}

#[test]
fn module_counts() {
    assert_eq!(Csc::new("c", 144, 31).param_count(), 168_912);
    assert_eq!(Lka::new("l", 72, 5, 7, 3).param_count(), 10_728);
    assert_eq!(Lka::new("l", 144, 5, 7, 3).param_count(), 31_824);
    assert_eq!(Hda::new("h", 36, true, true, 0.0, 1.0).param_count(), 3_998);
}

#[test]
fn ablation_toggles_remove_own_parameters() {
    let full = Network::new(&NetworkConfig::default()).unwrap().param_count();
    let off = |f: fn(&mut NetworkConfig)| {
        let mut cfg = NetworkConfig::default();
        f(&mut cfg);
        Network::new(&cfg).unwrap().param_count()
    };
    assert_eq!(full - off(|c| c.csc_enabled = false), 168_912);
    assert_eq!(full - off(|c| c.lka_enabled = false), 2 * 10_728 + 2 * 31_824);
    assert_eq!(full - off(|c| c.sdca_enabled = false), 2 * 1_332);
    assert_eq!(full - off(|c| c.fdpa_enabled = false), 2 * 2_666);
    assert_eq!(full - off(|c| c.hda_enabled = false), 2 * 3_998);
}

#[test]
fn csc_zero_weights_is_identity_and_branches_add_up() {
    let csc = Csc::new("c", 4, 31);
    let mut store = store_for(&csc, 3);
    let x = rand_tensor([1, 4, 9, 7], 1);

    let tape = Tape::<f64>::new();
    let p = store.bind(&tape, false);
    let xv = tape.constant(x.clone());
    let sum = csc.branch_sum(&tape, &p, xv).unwrap();
    let mut manual = Tensor::zeros(x.shape());
    for b in &csc.branches {
        let y = conv2d_forward(
            &x,
            store.get(&b.weight_name()).unwrap(),
            Some(store.get(&b.bias_name()).unwrap()),
            &b.spec,
        )
        .unwrap();
        manual.add_assign(&y);
    }
    assert!(tape.value(sum).max_abs_diff(&manual) < 1e-12);

    zero_all(&mut store);
    let tape = Tape::<f64>::new();
    let p = store.bind(&tape, false);
    let xv = tape.constant(x.clone());
    let y = csc.forward(&tape, &p, xv).unwrap();
    assert_eq!(*tape.value(y), x);
}

#[test]
fn lka_gates() {
    let lka = Lka::new("l", 2, 5, 7, 3);
    let mut store = store_for(&lka, 1);
    zero_all(&mut store);
    let x = rand_tensor([1, 2, 8, 8], 2);
    let tape = Tape::<f64>::new();
    let p = store.bind(&tape, false);
    let xv = tape.constant(x.clone());
    let y = lka.forward(&tape, &p, xv).unwrap();
    assert!(tape.value(y).data().iter().all(|&v| v == 0.0));

    // zero weights with unit pointwise bias gives an all-ones map
    store.get_mut(&lka.pointwise.bias_name()).unwrap().data_mut().fill(1.0);
    let tape = Tape::<f64>::new();
    let p = store.bind(&tape, false);
    let xv = tape.constant(x.clone());
    let y = lka.forward(&tape, &p, xv).unwrap();
    assert_eq!(*tape.value(y), x);
}

#[test]
fn lka_gradient_support_is_23() {
    let lka = Lka::new("l", 1, 5, 7, 3);
    let mut store = store_for(&lka, 0);
    for (_, v) in store.iter_mut() {
        let k = v.numel();
        v.data_mut()
            .iter_mut()
            .enumerate()
            .for_each(|(i, w)| *w = 0.5 + (i % 7) as f64 / k as f64);
    }
    let tape = Tape::<f64>::new();
    let p = store.bind(&tape, false);
    let x = tape.leaf(Tensor::full([1, 1, 48, 48], 1.0), true);
    let a = lka.attention(&tape, &p, x).unwrap();
    let mut pick = Tensor::zeros([1, 1, 48, 48]);
    pick.set([0, 0, 24, 24], 1.0);
    let mask = tape.constant(pick);
    let s = tape.mul(a, mask).unwrap();
    let s = tape.sum_all(s);
    let g = tape.backward(s).unwrap();
    let g = g.get(x).unwrap();
    let (mut ys, mut xs) = (Vec::new(), Vec::new());
    for y in 0..48 {
        for xx in 0..48 {
            if g.at([0, 0, y, xx]) != 0.0 {
                ys.push(y);
                xs.push(xx);
            }
        }
    }
    let span = |v: &[usize]| v.iter().max().unwrap() - v.iter().min().unwrap() + 1;
    assert_eq!((span(&ys), span(&xs)), (23, 23));
}

#[test]
fn fdpa_defaults_are_identity() {
    let f = Fdpa::new("f", 3, 0.0, 1.0);
    let store = store_for(&f, 5);
    let x = rand_tensor([2, 3, 8, 6], 9);
    let tape = Tape::<f64>::new();
    let p = store.bind(&tape, false);
    let xv = tape.constant(x.clone());
    let y = f.forward(&tape, &p, xv).unwrap();
    assert_eq!(*tape.value(y), x);
}

#[test]
fn fdpa_constant_plane_squares() {
    let f = Fdpa::new("f", 1, 1.0, 0.0);
    let mut store = store_for(&f, 5);
    store.get_mut("f.conv_a.weight").unwrap().data_mut()[0] = 1.0;
    store.get_mut("f.conv_b.weight").unwrap().data_mut()[0] = 1.0;
    let c = 0.7;
    let tape = Tape::<f64>::new();
    let p = store.bind(&tape, false);
    let xv = tape.constant(Tensor::full([1, 1, 4, 4], c));
    let y = f.forward(&tape, &p, xv).unwrap();
    assert!(tape.value(y).data().iter().all(|&v| (v - c * c).abs() < 1e-12));

    let f = Fdpa::new("g", 3, 0.8, 0.5);
    let store = store_for(&f, 6);
    let tape = Tape::<f64>::new();
    let p = store.bind(&tape, false);
    let xv = tape.constant(rand_tensor([1, 3, 8, 8], 4));
    let y = f.forward(&tape, &p, xv).unwrap();
    assert!(tape.value(y).is_finite());
}

#[test]
fn sdca_neutral_gate_halves() {
    let s = Sdca::new("s", 3);
    let mut store = store_for(&s, 1);
    zero_all(&mut store);
    let x = rand_tensor([1, 3, 5, 5], 3);
    let tape = Tape::<f64>::new();
    let p = store.bind(&tape, false);
    let xv = tape.constant(x.clone());
    let y = s.forward(&tape, &p, xv).unwrap();
    assert!(tape.value(y).max_abs_diff(&x.map(|v| 0.5 * v)) < 1e-15);

    let h = Hda::new("h", 3, true, true, 0.0, 1.0);
    let mut store = store_for(&h, 2);
    store.get_mut("h.sdca.conv.weight").unwrap().data_mut().fill(0.0);
    let tape = Tape::<f64>::new();
    let p = store.bind(&tape, false);
    let xv = tape.constant(x.clone());
    let y = h.forward(&tape, &p, xv).unwrap();
    assert!(tape.value(y).max_abs_diff(&x.map(|v| 0.5 * v)) < 1e-15);
}

#[test]
fn sdca_diagonal_gate_isolates_channels() {
    let s = Sdca::new("s", 3);
    let mut store = store_for(&s, 1);
    let w = store.get_mut("s.conv.weight").unwrap();
    for o in 0..3 {
        for i in 0..3 {
            w.set([o, i, 0, 0], if o == i { 0.7 } else { 0.0 });
        }
    }
    let x = rand_tensor([1, 3, 4, 4], 5);
    let gates = |x: &Tensor<f64>| {
        let tape = Tape::<f64>::new();
        let p = store.bind(&tape, false);
        let xv = tape.constant(x.clone());
        let g = s.gates(&tape, &p, xv).unwrap();
        tape.to_tensor(g)
    };
    let base = gates(&x);
    let mut bumped = x.clone();
    for v in &mut bumped.data_mut()[16..32] {
        *v += 0.3;
    }
    let moved = gates(&bumped);
    assert_eq!(base.data()[0], moved.data()[0]);
    assert_ne!(base.data()[1], moved.data()[1]);
    assert_eq!(base.data()[2], moved.data()[2]);
    assert!(base.data().iter().all(|&g| g > 0.0 && g < 1.0));
}

#[test]
fn network_shapes_determinism_and_zero_path() {
    let net = Network::new(&NetworkConfig {
        base_channels: 4,
        ..Default::default()
    })
    .unwrap();
    let store = net.init_params(11).unwrap();
    let img = rand_tensor([1, 3, 16, 20], 6).map(|v| v.abs()).cast::<f32>();
    let a = net.infer(&store, &img).unwrap();
    let b = net.infer(&store, &img).unwrap();
    assert_eq!(a.shape(), img.shape());
    assert_eq!(a, b);

    let mut zero = store.clone();
    for (name, v) in zero.iter_mut() {
        if !name.ends_with(".beta") {
            v.data_mut().fill(0.0);
        }
    }
    let out = net.infer(&zero, &img).unwrap();
    assert_eq!(out, img.map(|v| v.clamp(0.0, 1.0)));
    assert!(net.infer(&store, &Tensor::zeros([1, 3, 18, 16])).is_err());
}
