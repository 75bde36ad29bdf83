use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::max_relative_error;
use super::*;
use crate::Result;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    t.data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    t
}

/// Reduces `out` to a scalar through a fixed random projection.
fn project(tape: &mut Tape, out: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = random(tape.shape(out), &mut rng);
    let r = tape.leaf(r);
    let m = tape.mul(out, r)?;
    Ok(tape.sum_all(m))
}

fn check<F>(name: &str, inputs: Vec<Tensor>, build: F)
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let err = max_relative_error(&inputs, |t, v| {
        let out = build(t, v)?;
        project(t, out, 99)
    })
    .unwrap();
    assert!(err < 1e-4, "{name}: relative error {err}");
}

#[test]
fn gradient_checks_for_every_op() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut r = |s: &[usize]| random(s, &mut rng);
    check("matmul", vec![r(&[3, 4]), r(&[4, 2])], |t, v| t.matmul(v[0], v[1]));
    check("add", vec![r(&[2, 3]), r(&[2, 3])], |t, v| t.add(v[0], v[1]));
    check("sub", vec![r(&[2, 3]), r(&[2, 3])], |t, v| t.sub(v[0], v[1]));
    check("mul", vec![r(&[2, 3]), r(&[2, 3])], |t, v| t.mul(v[0], v[1]));
    check("scale", vec![r(&[5])], |t, v| Ok(t.scale(v[0], -1.7)));
    check("add_bias", vec![r(&[3, 2, 4]), r(&[4])], |t, v| t.add_bias(v[0], v[1]));
    check("relu", vec![r(&[4, 3])], |t, v| Ok(t.relu(v[0])));
    for axis in 0..3 {
        check("softmax", vec![r(&[2, 3, 4])], move |t, v| t.softmax(v[0], axis));
    }
    check("layernorm", vec![r(&[3, 5]), r(&[5]), r(&[5])], |t, v| {
        t.layernorm(v[0], v[1], v[2])
    });
    check("concat", vec![r(&[2, 2, 1]), r(&[2, 2, 3])], |t, v| t.concat(&[v[0], v[1]]));
    check("reshape", vec![r(&[2, 6])], |t, v| t.reshape(v[0], &[3, 4]));
    check("expand_i", vec![r(&[3, 2])], |t, v| t.expand_i(v[0]));
    check("expand_j", vec![r(&[3, 2])], |t, v| t.expand_j(v[0]));
    check("expand_rows", vec![r(&[3])], |t, v| t.expand_rows(v[0], 4));
    check("transpose01", vec![r(&[3, 2, 2])], |t, v| t.transpose01(v[0]));
    for axis in 0..3 {
        check("sum_axis", vec![r(&[2, 3, 2])], move |t, v| t.sum_axis(v[0], axis));
    }
    let mask = Some(vec![true, false, true, true]);
    for kind in [Reduce::Sum, Reduce::Mean, Reduce::Max, Reduce::Min, Reduce::Std] {
        check("reduce_rows", vec![r(&[4, 3])], move |t, v| t.reduce_rows(v[0], kind, None));
        let mk = mask.clone();
        check("reduce_rows masked", vec![r(&[4, 3])], move |t, v| {
            t.reduce_rows(v[0], kind, mk.clone())
        });
    }
    check("sum_all", vec![r(&[2, 3])], |t, v| Ok(t.sum_all(v[0])));
    let targets = Tensor::from_rows(&[vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap();
    check("cross_entropy", vec![r(&[2, 3])], move |t, v| {
        let p = t.softmax(v[0], 1)?;
        t.cross_entropy(p, &targets, &[1.0, 2.5])
    });
}

#[test]
fn op_examples() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor::from_rows(&[vec![3.0, 3.0, 3.0, 3.0]]).unwrap());
    let s = t.softmax(x, 1).unwrap();
    assert_eq!(t.value(s).data, vec![0.25; 4]);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = t.leaf(random(&[3, 7], &mut rng));
    let g = t.leaf(Tensor::new(vec![7], vec![1.0; 7]).unwrap());
    let b = t.leaf(Tensor::zeros(&[7]));
    let y = t.layernorm(x, g, b).unwrap();
    for row in t.value(y).data.chunks(7) {
        let mean = row.iter().sum::<f64>() / 7.0;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 7.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4, "var {var}");
    }

    let a = t.leaf(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
    let i = t.leaf(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
    let p = t.matmul(a, i).unwrap();
    assert_eq!(t.value(p).data, vec![1.0, 2.0, 3.0, 4.0]);

    let bad = t.leaf(Tensor::zeros(&[3, 2]));
    let err = t.matmul(a, bad).unwrap_err().to_string();
    assert!(err.contains("[2, 2]") && err.contains("[3, 2]"), "{err}");

    let col = t.leaf(Tensor::from_rows(&[vec![1.0], vec![3.0]]).unwrap());
    let got: Vec<f64> = [Reduce::Max, Reduce::Min, Reduce::Mean, Reduce::Std]
        .iter()
        .map(|&k| {
            let v = t.reduce_rows(col, k, None).unwrap();
            t.value(v).item()
        })
        .collect();
    assert_eq!(got, vec![3.0, 1.0, 2.0, 1.0]);
}

#[test]
fn backward_examples() {
    let mut store = ParamStore::new();
    let w = store
        .add("w", Tensor::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap())
        .unwrap();
    let unused = store.add_zeros("unused", &[3]).unwrap();
    let mut t = Tape::new();
    let wv = t.param(&store, w);
    let s = t.sum_all(wv);
    let g = t.backward(s).unwrap();
    accumulate_grads(&mut store, &g).unwrap();
    assert_eq!(store.grad(w), &[1.0; 4]);
    assert_eq!(store.grad(unused), &[0.0; 3]);

    // ‖Wx‖² has gradient 2 (Wx) x'
    let mut t = Tape::new();
    let wv = t.param(&store, w);
    let x = t.leaf(Tensor::from_rows(&[vec![2.0], vec![-1.0]]).unwrap());
    let wx = t.matmul(wv, x).unwrap();
    let sq = t.mul(wx, wx).unwrap();
    let loss = t.sum_all(sq);
    let g = t.backward(loss).unwrap();
    let wxv = [1.0 * 2.0 + -2.0 * -1.0, 0.5 * 2.0 + 3.0 * -1.0];
    let expect = [2.0 * wxv[0] * 2.0, 2.0 * wxv[0] * -1.0, 2.0 * wxv[1] * 2.0, 2.0 * wxv[1] * -1.0];
    assert_eq!(g.get(wv).data, expect);

    assert!(t.backward(loss).is_err());
    let mut t = Tape::new();
    let v = t.leaf(Tensor::zeros(&[2]));
    assert!(t.backward(v).is_err());
}

#[test]
fn optimizer_examples() {
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::scalar(1.0)).unwrap();
    store.sgd_step(0.1);
    assert_eq!(store.value(w).item(), 1.0);
    store.accumulate(w, &[2.0]).unwrap();
    store.sgd_step(0.1);
    assert!((store.value(w).item() - 0.8).abs() < 1e-15);

    let mut store = ParamStore::new();
    let w = store
        .add("w", Tensor::new(vec![3], vec![3.0, -2.0, 0.5]).unwrap())
        .unwrap();
    let mut steps = 0;
    while steps < 200 {
        store.zero_grad();
        let grad: Vec<f64> = store.value(w).data.iter().map(|v| 2.0 * v).collect();
        store.accumulate(w, &grad).unwrap();
        store.sgd_step(0.1);
        steps += 1;
        let f: f64 = store.value(w).data.iter().map(|v| v * v).sum();
        if f < 1e-6 {
            break;
        }
    }
    assert!(steps < 200);

    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::new(vec![2], vec![1.0, -1.0]).unwrap()).unwrap();
    let cfg = AdamConfig {
        lr: 0.05,
        ..AdamConfig::default()
    };
    for _ in 0..200 {
        store.zero_grad();
        let grad: Vec<f64> = store.value(w).data.iter().map(|v| 2.0 * v).collect();
        store.accumulate(w, &grad).unwrap();
        store.adam_step(&cfg);
    }
    assert!(store.value(w).data.iter().all(|v| v.abs() < 1e-2));
}

#[test]
fn clip_and_duplicate_names() {
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::new(vec![2], vec![0.0, 0.0]).unwrap()).unwrap();
    assert!(store.add("w", Tensor::scalar(0.0)).is_err());
    store.accumulate(w, &[3.0, 4.0]).unwrap();
    assert_eq!(store.clip_grad_norm(1.0), 5.0);
    assert!((store.grad_norm() - 1.0).abs() < 1e-15);
}

#[test]
fn checkpoint_roundtrip() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new();
    store.add_weight("layer.w", 3, 4, &mut rng).unwrap();
    store.add_zeros("layer.b", &[4]).unwrap();
    store
        .add("odd", Tensor::new(vec![2], vec![f64::MIN_POSITIVE, -0.0]).unwrap())
        .unwrap();
    let entries: Vec<(String, Tensor)> = store
        .entries()
        .map(|(n, t)| (n.to_string(), t.clone()))
        .collect();
    let bytes = checkpoint::encode(&entries);
    let back = checkpoint::decode(&bytes).unwrap();
    assert_eq!(back.len(), 3);
    for ((n1, t1), (n2, t2)) in entries.iter().zip(&back) {
        assert_eq!(n1, n2);
        assert_eq!(t1.shape, t2.shape);
        let bits = |t: &Tensor| t.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(t1), bits(t2));
    }
    let mut other = store.clone();
    other.value_mut(other.id("layer.w").unwrap()).data.fill(0.0);
    other
        .load_values(back.iter().map(|(n, t)| (n.as_str(), t)))
        .unwrap();
    assert_eq!(other.value(other.id("layer.w").unwrap()), store.value(store.id("layer.w").unwrap()));

    let mut v2 = bytes.clone();
    v2[3] = b'2';
    let err = checkpoint::decode(&v2).unwrap_err().to_string();
    assert!(err.contains("GDF2") && err.contains("GDF1"), "{err}");
    assert!(checkpoint::decode(&bytes[..bytes.len() - 3]).is_err());
    assert!(checkpoint::decode(b"nope").is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.gdf");
    checkpoint::write_file(&path, &entries).unwrap();
    assert_eq!(checkpoint::read_file(&path).unwrap(), back);
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        let w = store.add_weight("w", 3, 2, &mut rng).unwrap();
        let b = store.add_zeros("b", &[2]).unwrap();
        let cfg = AdamConfig::default();
        for step in 0..20 {
            store.zero_grad();
            let mut t = Tape::new();
            let x = t.leaf(random(&[4, 3], &mut ChaCha8Rng::seed_from_u64(step)));
            let wv = t.param(&store, w);
            let bv = t.param(&store, b);
            let h = t.matmul(x, wv).unwrap();
            let h = t.add_bias(h, bv).unwrap();
            let p = t.softmax(h, 1).unwrap();
            let tgt = Tensor::from_rows(&vec![vec![1.0, 0.0]; 4]).unwrap();
            let loss = t.cross_entropy(p, &tgt, &[1.0; 4]).unwrap();
            let g = t.backward(loss).unwrap();
            accumulate_grads(&mut store, &g).unwrap();
            store.adam_step(&cfg);
        }
        store
    };
    let (a, b) = (run(), run());
    for ((_, x), (_, y)) in a.entries().zip(b.entries()) {
        assert_eq!(x.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), y.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
