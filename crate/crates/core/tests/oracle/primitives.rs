//! Per-primitive checks: tape forward values against a naive reference, tape
//! gradients against central differences of that reference.

use mdhan::autodiff::{ParamStore, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prim {
    MatMul,
    VecMat,
    MatVec,
    Dot,
    Add,
    AddRow,
    Sub,
    Mul,
    Maximum,
    Scale,
    Tanh,
    Sigmoid,
    Relu,
    Softmax,
    MaskedSoftmax,
    Concat,
    Stack,
    Row,
    Sum,
    Mean,
    Dropout,
    Embedding,
    Bce,
}

pub const ALL: &[Prim] = &[
    Prim::MatMul,
    Prim::VecMat,
    Prim::MatVec,
    Prim::Dot,
    Prim::Add,
    Prim::AddRow,
    Prim::Sub,
    Prim::Mul,
    Prim::Maximum,
    Prim::Scale,
    Prim::Tanh,
    Prim::Sigmoid,
    Prim::Relu,
    Prim::Softmax,
    Prim::MaskedSoftmax,
    Prim::Concat,
    Prim::Stack,
    Prim::Row,
    Prim::Sum,
    Prim::Mean,
    Prim::Dropout,
    Prim::Embedding,
    Prim::Bce,
];

const H: f64 = 1e-6;

type Reference = Box<dyn Fn(&[Vec<f64>]) -> Vec<f64>>;
type Builder = Box<dyn Fn(&mut Tape<'_>, &[Var]) -> mdhan::Result<Var>>;

struct Case {
    inputs: Vec<(Vec<usize>, Vec<f64>)>,
    reference: Reference,
    build: Builder,
}

fn values(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-2.0..2.0)).collect()
}

/// Values with magnitude at least `gap`, away from kinks at zero.
fn away_from_zero(r: &mut ChaCha8Rng, n: usize, gap: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let m = r.random_range(gap..2.0);
            if r.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect()
}

fn dim(r: &mut ChaCha8Rng) -> usize {
    r.random_range(1..=5)
}

fn ref_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                out[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    out
}

fn ref_sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn ref_softmax(x: &[f64], n: usize, mask: Option<&[bool]>) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (row, chunk) in x.chunks(n).enumerate() {
        let on = |j: usize| mask.is_none_or(|m| m[row * n + j]);
        let live: Vec<usize> = (0..n).filter(|&j| on(j)).collect();
        if live.is_empty() {
            continue;
        }
        let mx = live.iter().map(|&j| chunk[j]).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = live.iter().map(|&j| (chunk[j] - mx).exp()).sum();
        for &j in &live {
            out[row * n + j] = (chunk[j] - mx).exp() / z;
        }
    }
    out
}

fn unary(shape: Vec<usize>, x: Vec<f64>, f: fn(f64) -> f64, build: fn(&mut Tape<'_>, Var) -> Var) -> Case {
    Case {
        inputs: vec![(shape, x)],
        reference: Box::new(move |v| v[0].iter().map(|&x| f(x)).collect()),
        build: Box::new(move |t, v| Ok(build(t, v[0]))),
    }
}

fn binary(
    shape: Vec<usize>,
    a: Vec<f64>,
    b: Vec<f64>,
    f: fn(f64, f64) -> f64,
    build: fn(&mut Tape<'_>, Var, Var) -> mdhan::Result<Var>,
) -> Case {
    Case {
        inputs: vec![(shape.clone(), a), (shape, b)],
        reference: Box::new(move |v| v[0].iter().zip(&v[1]).map(|(&x, &y)| f(x, y)).collect()),
        build: Box::new(move |t, v| build(t, v[0], v[1])),
    }
}

fn any_shape(r: &mut ChaCha8Rng) -> Vec<usize> {
    if r.random_bool(0.5) {
        vec![dim(r)]
    } else {
        vec![dim(r), dim(r)]
    }
}

fn make_case(prim: Prim, r: &mut ChaCha8Rng) -> Case {
    match prim {
        Prim::MatMul | Prim::VecMat | Prim::MatVec | Prim::Dot => {
            let (m, k, n) = (dim(r), dim(r), dim(r));
            let (sa, sb, mm, nn) = match prim {
                Prim::MatMul => (vec![m, k], vec![k, n], m, n),
                Prim::VecMat => (vec![k], vec![k, n], 1, n),
                Prim::MatVec => (vec![m, k], vec![k], m, 1),
                _ => (vec![k], vec![k], 1, 1),
            };
            let a = values(r, mm * k);
            let b = values(r, k * nn);
            Case {
                inputs: vec![(sa, a), (sb, b)],
                reference: Box::new(move |v| ref_matmul(&v[0], &v[1], mm, k, nn)),
                build: Box::new(|t, v| t.matmul(v[0], v[1])),
            }
        }
        Prim::Add | Prim::Sub | Prim::Mul | Prim::Maximum => {
            let shape = any_shape(r);
            let len = shape.iter().product();
            let a = values(r, len);
            let mut b = values(r, len);
            if prim == Prim::Maximum {
                for (x, y) in a.iter().zip(b.iter_mut()) {
                    if (x - *y).abs() < 1e-2 {
                        *y = x + 0.5;
                    }
                }
            }
            match prim {
                Prim::Add => binary(shape, a, b, |x, y| x + y, |t, a, b| t.add(a, b)),
                Prim::Sub => binary(shape, a, b, |x, y| x - y, |t, a, b| t.sub(a, b)),
                Prim::Mul => binary(shape, a, b, |x, y| x * y, |t, a, b| t.mul(a, b)),
                _ => binary(shape, a, b, f64::max, |t, a, b| t.maximum(a, b)),
            }
        }
        Prim::AddRow => {
            let (m, n) = (dim(r), dim(r));
            let a = values(r, m * n);
            let b = values(r, n);
            Case {
                inputs: vec![(vec![m, n], a), (vec![n], b)],
                reference: Box::new(move |v| (0..m * n).map(|i| v[0][i] + v[1][i % n]).collect()),
                build: Box::new(|t, v| t.add(v[0], v[1])),
            }
        }
        Prim::Scale => {
            let shape = any_shape(r);
            let x = values(r, shape.iter().product());
            let c = r.random_range(-3.0..3.0);
            Case {
                inputs: vec![(shape, x)],
                reference: Box::new(move |v| v[0].iter().map(|x| c * x).collect()),
                build: Box::new(move |t, v| Ok(t.scale(v[0], c))),
            }
        }
        Prim::Tanh => {
            let shape = any_shape(r);
            let x = values(r, shape.iter().product());
            unary(shape, x, f64::tanh, |t, a| t.tanh(a))
        }
        Prim::Sigmoid => {
            let shape = any_shape(r);
            let x = values(r, shape.iter().product());
            unary(shape, x, ref_sigmoid, |t, a| t.sigmoid(a))
        }
        Prim::Relu => {
            let shape = any_shape(r);
            let x = away_from_zero(r, shape.iter().product(), 1e-2);
            unary(shape, x, |x| x.max(0.0), |t, a| t.relu(a))
        }
        Prim::Softmax => {
            let shape = any_shape(r);
            let n = *shape.last().unwrap();
            let x = values(r, shape.iter().product());
            Case {
                inputs: vec![(shape, x)],
                reference: Box::new(move |v| ref_softmax(&v[0], n, None)),
                build: Box::new(|t, v| Ok(t.softmax(v[0]))),
            }
        }
        Prim::MaskedSoftmax => {
            let shape = any_shape(r);
            let n = *shape.last().unwrap();
            let len: usize = shape.iter().product();
            let x = values(r, len);
            let mask: Vec<bool> = (0..len).map(|_| r.random_bool(0.7)).collect();
            let m2 = mask.clone();
            Case {
                inputs: vec![(shape, x)],
                reference: Box::new(move |v| ref_softmax(&v[0], n, Some(&mask))),
                build: Box::new(move |t, v| t.masked_softmax(v[0], &m2)),
            }
        }
        Prim::Concat => {
            let parts = r.random_range(1..=3);
            let inputs: Vec<_> = (0..parts)
                .map(|_| {
                    let n = dim(r);
                    (vec![n], values(r, n))
                })
                .collect();
            Case {
                inputs,
                reference: Box::new(|v| v.concat()),
                build: Box::new(|t, v| t.concat(v)),
            }
        }
        Prim::Stack => {
            let (rows, n) = (r.random_range(1..=3), dim(r));
            let inputs: Vec<_> = (0..rows).map(|_| (vec![n], values(r, n))).collect();
            Case {
                inputs,
                reference: Box::new(|v| v.concat()),
                build: Box::new(|t, v| t.stack(v)),
            }
        }
        Prim::Row => {
            let (m, n) = (dim(r), dim(r));
            let i = r.random_range(0..m);
            let x = values(r, m * n);
            Case {
                inputs: vec![(vec![m, n], x)],
                reference: Box::new(move |v| v[0][i * n..(i + 1) * n].to_vec()),
                build: Box::new(move |t, v| t.row(v[0], i)),
            }
        }
        Prim::Sum | Prim::Mean => {
            let shape = any_shape(r);
            let x = values(r, shape.iter().product());
            if prim == Prim::Sum {
                Case {
                    inputs: vec![(shape, x)],
                    reference: Box::new(|v| vec![v[0].iter().sum()]),
                    build: Box::new(|t, v| Ok(t.sum(v[0]))),
                }
            } else {
                Case {
                    inputs: vec![(shape, x)],
                    reference: Box::new(|v| vec![v[0].iter().sum::<f64>() / v[0].len() as f64]),
                    build: Box::new(|t, v| Ok(t.mean(v[0]))),
                }
            }
        }
        Prim::Dropout => {
            let shape = any_shape(r);
            let len: usize = shape.iter().product();
            let x = away_from_zero(r, len, 1e-2);
            let rate = r.random_range(0.1..0.9);
            let seed: u64 = r.random();
            // The keep pattern is read back from one tape pass at the base
            // point; the reference then applies it as a fixed scaling.
            let store = store_of(&[(shape.clone(), x.clone())]);
            let mut tape = Tape::new();
            let vars = tape.params(&store);
            let out = tape.dropout(vars[0], rate, true, seed).expect("dropout");
            let keep = 1.0 / (1.0 - rate);
            let factors: Vec<f64> = tape
                .value(out)
                .iter()
                .zip(&x)
                .map(|(o, x)| if *o == 0.0 { 0.0 } else { o / x })
                .collect();
            assert!(
                factors.iter().all(|f| *f == 0.0 || (f - keep).abs() < 1e-12),
                "dropout survivors must be scaled by 1/(1-rate)"
            );
            Case {
                inputs: vec![(shape, x)],
                reference: Box::new(move |v| v[0].iter().zip(&factors).map(|(x, f)| x * f).collect()),
                build: Box::new(move |t, v| t.dropout(v[0], rate, true, seed)),
            }
        }
        Prim::Embedding => {
            let (vocab, d, n) = (dim(r) + 1, dim(r), dim(r));
            let idx: Vec<usize> = (0..n).map(|_| r.random_range(0..vocab)).collect();
            let table = values(r, vocab * d);
            let i2 = idx.clone();
            Case {
                inputs: vec![(vec![vocab, d], table)],
                reference: Box::new(move |v| idx.iter().flat_map(|&i| v[0][i * d..(i + 1) * d].to_vec()).collect()),
                build: Box::new(move |t, v| t.embedding_lookup(v[0], &i2)),
            }
        }
        Prim::Bce => {
            let x = r.random_range(-4.0..4.0);
            let target = if r.random_bool(0.5) { r.random_range(0.0..1.0) } else { f64::from(r.random_bool(0.5) as u8) };
            Case {
                inputs: vec![(vec![1], vec![x])],
                reference: Box::new(move |v| {
                    let p = ref_sigmoid(v[0][0]).clamp(1e-12, 1.0 - 1e-12);
                    vec![-(target * p.ln() + (1.0 - target) * (1.0 - p).ln())]
                }),
                build: Box::new(move |t, v| t.bce_with_logits(v[0], target)),
            }
        }
    }
}

fn store_of(inputs: &[(Vec<usize>, Vec<f64>)]) -> ParamStore {
    let mut store = ParamStore::new();
    for (i, (shape, data)) in inputs.iter().enumerate() {
        store.add(format!("x{i}"), Tensor::new(shape.clone(), data.clone()).expect("tensor"));
    }
    store
}

/// Outcome of one randomized check.
#[derive(Debug, Clone, Copy)]
pub struct CaseResult {
    pub forward_error: f64,
    pub grad_error: f64,
}

/// Run one randomized case for `prim`. The loss is `sum(w * op(inputs))` for
/// random weights `w`, so every output coordinate contributes.
pub fn check_case(prim: Prim, seed: u64) -> Result<CaseResult, String> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let case = make_case(prim, &mut r);
    let base: Vec<Vec<f64>> = case.inputs.iter().map(|(_, d)| d.clone()).collect();
    let expected = (case.reference)(&base);
    let w = values(&mut r, expected.len());

    let store = store_of(&case.inputs);
    let mut tape = Tape::new();
    let vars = tape.params(&store);
    let out = (case.build)(&mut tape, &vars).map_err(|e| format!("{prim:?}: {e}"))?;
    let got = tape.value(out).to_vec();
    if got.len() != expected.len() {
        return Err(format!("{prim:?}: output length {} != reference {}", got.len(), expected.len()));
    }
    let forward_error = got.iter().zip(&expected).map(|(a, b)| (a - b).abs() / (1.0 + b.abs())).fold(0.0, f64::max);
    if forward_error > 1e-12 {
        return Err(format!("{prim:?}: forward mismatch {forward_error:e}"));
    }
    let wv = tape.constant(Tensor::new(tape.shape(out).to_vec(), w.clone()).expect("weights"));
    let prod = tape.mul(out, wv).map_err(|e| e.to_string())?;
    let loss = tape.sum(prod);
    let grads = tape.backward(loss).map_err(|e| e.to_string())?;

    let objective = |x: &[Vec<f64>]| -> f64 { (case.reference)(x).iter().zip(&w).map(|(a, b)| a * b).sum() };
    let mut grad_error = 0.0f64;
    for (p, (id, _, t)) in store.iter().enumerate() {
        let analytic = grads.get(id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.len()]);
        for i in 0..t.len() {
            let mut plus = base.clone();
            plus[p][i] += H;
            let mut minus = base.clone();
            minus[p][i] -= H;
            let numeric = (objective(&plus) - objective(&minus)) / (2.0 * H);
            let err = (analytic[i] - numeric).abs() / (1.0 + numeric.abs());
            grad_error = grad_error.max(err);
        }
    }
    if grad_error > 1e-6 {
        return Err(format!("{prim:?}: gradient mismatch {grad_error:e} (seed {seed})"));
    }
    Ok(CaseResult { forward_error, grad_error })
}

/// `cases` randomized checks of every primitive. Returns the number of checks
/// run and the worst gradient error seen.
pub fn check_all(cases: usize, seed: u64) -> Result<(usize, f64), String> {
    let mut worst = 0.0f64;
    let mut n = 0;
    for (pi, &prim) in ALL.iter().enumerate() {
        for c in 0..cases {
            let s = seed ^ ((pi as u64) << 32) ^ c as u64;
            worst = worst.max(check_case(prim, s)?.grad_error);
            n += 1;
        }
    }
    Ok((n, worst))
}
