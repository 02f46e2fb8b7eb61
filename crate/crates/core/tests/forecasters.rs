use grngc_core::diff::{backward, finite_difference, max_relative_error, Tensor, Var};
use grngc_core::forecast::{kan_layer_forward, Backbone, BackboneKind, Params, SplineSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Recursive Cox-de Boor on an explicit knot vector, written independently
/// of the library's local evaluation.
fn cox_de_boor(knots: &[f64], i: usize, d: usize, x: f64) -> f64 {
    if d == 0 {
        return if knots[i] <= x && x < knots[i + 1] { 1.0 } else { 0.0 };
    }
    let left = (x - knots[i]) / (knots[i + d] - knots[i]) * cox_de_boor(knots, i, d - 1, x);
    let right = (knots[i + d + 1] - x) / (knots[i + d + 1] - knots[i + 1]) * cox_de_boor(knots, i + 1, d - 1, x);
    left + right
}

fn reference_basis(spec: &SplineSpec, x: f64) -> Vec<f64> {
    let h = (spec.hi - spec.lo) / spec.grid_size as f64;
    let knots: Vec<f64> = (0..spec.grid_size + 2 * spec.degree + 1)
        .map(|j| spec.lo + (j as f64 - spec.degree as f64) * h)
        .collect();
    let x = x.clamp(spec.lo, spec.hi);
    (0..spec.num_basis()).map(|i| cox_de_boor(&knots, i, spec.degree, x)).collect()
}

fn spec_strategy() -> impl Strategy<Value = SplineSpec> {
    (1usize..6, 2usize..12, -3.0f64..0.0, 0.5f64..4.0).prop_map(|(degree, grid_size, lo, width)| SplineSpec {
        degree,
        grid_size,
        lo,
        hi: lo + width,
    })
}

#[test]
fn cubic_center_value() {
    let spec = SplineSpec {
        degree: 3,
        grid_size: 4,
        lo: 0.0,
        hi: 4.0,
    };
    // the cubic centred on knot 0 peaks at 2/3
    assert!((spec.basis(0.0)[1] - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn matches_recursive_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for spec in [SplineSpec::default(), SplineSpec { degree: 1, grid_size: 3, lo: -1.0, hi: 1.0 }, SplineSpec { degree: 5, grid_size: 7, lo: 0.0, hi: 2.0 }] {
        for _ in 0..200 {
            let x = rng.random_range(spec.lo - 0.5..spec.hi + 0.5);
            let got = spec.basis(x);
            let want = reference_basis(&spec, x);
            assert!(max_relative_error(&got, &want, 1.0) < 1e-12, "{spec:?} at {x}");
        }
    }
}

#[test]
fn out_of_range_inputs_clamp() {
    let spec = SplineSpec::default();
    assert_eq!(spec.basis(5.0), spec.basis(spec.hi));
    assert_eq!(spec.basis(-7.0), spec.basis(spec.lo));
    let mut d = vec![0.0; spec.num_basis()];
    spec.derivative_into(5.0, 1, &mut d);
    assert!(d.iter().all(|&v| v == 0.0));
}

#[test]
fn derivatives_match_finite_differences() {
    let spec = SplineSpec::default();
    let nb = spec.num_basis();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for order in 1..=2 {
        for _ in 0..50 {
            let x = rng.random_range(spec.lo + 0.01..spec.hi - 0.01);
            let mut analytic = vec![0.0; nb];
            spec.derivative_into(x, order, &mut analytic);
            for i in 0..nb {
                let fd = finite_difference(
                    |v| {
                        let mut out = vec![0.0; nb];
                        spec.derivative_into(v[0], order - 1, &mut out);
                        out[i]
                    },
                    &[x],
                    1e-6,
                )
                .unwrap()[0];
                // knots are kinks of the highest derivative; skip points next to them
                let h = spec.spacing();
                let near_knot = ((x - spec.lo) / h - ((x - spec.lo) / h).round()).abs() < 1e-4;
                if !near_knot {
                    assert!((analytic[i] - fd).abs() < 1e-5 * analytic[i].abs().max(1.0), "order {order} basis {i} at {x}");
                }
            }
        }
    }
    let mut beyond = vec![1.0; nb];
    spec.derivative_into(0.3, spec.degree + 1, &mut beyond);
    assert!(beyond.iter().all(|&v| v == 0.0));
}

/// Direct per-edge evaluation of one KAN layer.
fn naive_kan_layer(x: &[Vec<f64>], wb: &Tensor, ws: &Tensor, c: &Tensor, spec: &SplineSpec) -> Vec<Vec<f64>> {
    let (n_out, n_in, nb) = (wb.shape()[0], wb.shape()[1], spec.num_basis());
    let silu = |v: f64| v / (1.0 + (-v).exp());
    x.iter()
        .map(|row| {
            (0..n_out)
                .map(|o| {
                    (0..n_in)
                        .map(|i| {
                            let basis = reference_basis(spec, row[i]);
                            let spline: f64 = (0..nb).map(|b| c.data()[(o * n_in + i) * nb + b] * basis[b]).sum();
                            wb.data()[o * n_in + i] * silu(row[i]) + ws.data()[o * n_in + i] * spline
                        })
                        .sum()
                })
                .collect()
        })
        .collect()
}

#[test]
fn kan_layer_matches_edge_loop() {
    let spec = SplineSpec::default();
    let backbone = Backbone::init(BackboneKind::Kan, &[3, 4], spec, 17).unwrap();
    let Params::Kan(kan) = &backbone.params else { unreachable!() };
    let layer = &kan.layers[0];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rows: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| rng.random_range(-2.5..2.5)).collect()).collect();
    let out = kan_layer_forward(
        &Var::constant(Tensor::from_rows(&rows).unwrap()),
        &Var::constant(layer.base_weight.clone()),
        &Var::constant(layer.spline_weight.clone()),
        &Var::constant(layer.coefficients.clone()),
        spec,
    )
    .unwrap();
    let want = naive_kan_layer(&rows, &layer.base_weight, &layer.spline_weight, &layer.coefficients, &spec);
    for (n, row) in want.iter().enumerate() {
        for (o, &v) in row.iter().enumerate() {
            assert!((out.value().at2(n, o) - v).abs() < 1e-12);
        }
    }
}

fn backbone_gradient_error(kind: BackboneKind, seed: u64) -> f64 {
    let backbone = Backbone::init(kind, &[4, 5, 2], SplineSpec::default(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::new(vec![3, 4], (0..12).map(|_| rng.random_range(-1.8..1.8)).collect()).unwrap();
    let params = backbone.bind();
    let loss = backbone.forward_with(&params, &Var::constant(x.clone())).unwrap().square().sum();
    let grads = backward(&loss, &params, false).unwrap();
    let engine: Vec<f64> = grads.iter().flat_map(|g| g.value().data().to_vec()).collect();
    let flat: Vec<f64> = backbone.tensors().iter().flat_map(|t| t.data().to_vec()).collect();
    let shapes: Vec<Vec<usize>> = backbone.tensors().iter().map(|t| t.shape().to_vec()).collect();
    let fd = finite_difference(
        |v| {
            let mut b = backbone.clone();
            let mut offset = 0;
            let values: Vec<Tensor> = shapes
                .iter()
                .map(|s| {
                    let n: usize = s.iter().product();
                    let t = Tensor::new(s.clone(), v[offset..offset + n].to_vec()).unwrap();
                    offset += n;
                    t
                })
                .collect();
            b.set_tensors(&values).unwrap();
            b.forward(&x).unwrap().data().iter().map(|y| y * y).sum()
        },
        &flat,
        1e-6,
    )
    .unwrap();
    max_relative_error(&engine, &fd, 1e-3)
}

#[test]
fn backbone_weight_gradients_match_finite_differences() {
    for seed in 0..3 {
        assert!(backbone_gradient_error(BackboneKind::Kan, seed) < 1e-5);
        assert!(backbone_gradient_error(BackboneKind::Mlp, seed) < 1e-5);
    }
}

/// Per-sample Jacobian `[batch, n_in, n_out]` from one reverse pass per output.
fn jacobian_by_outputs(backbone: &Backbone, x: &Tensor) -> Vec<f64> {
    let (batch, n_in, n_out) = (x.shape()[0], x.shape()[1], backbone.output_dim());
    let mut out = vec![0.0; batch * n_in * n_out];
    for o in 0..n_out {
        let input = Var::param(x.clone());
        let y = backbone.forward_with(&backbone.bind_frozen(), &input).unwrap();
        let g = backward(&y.slice(1, o, o + 1).unwrap().sum(), &[input], false).unwrap().remove(0);
        for (k, v) in g.value().data().iter().enumerate() {
            out[k * n_out + o] = *v;
        }
    }
    out
}

#[test]
fn fused_jacobian_matches_reverse_passes() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = Tensor::new(vec![5, 4], (0..20).map(|_| rng.random_range(-2.2..2.2)).collect()).unwrap();
    for kind in [BackboneKind::Kan, BackboneKind::Mlp] {
        for sizes in [vec![4, 3], vec![4, 6, 3], vec![4, 5, 6, 3]] {
            let backbone = Backbone::init(kind, &sizes, SplineSpec::default(), 3).unwrap();
            let params = backbone.bind();
            let (y, jac) = backbone.forward_jacobian_with(&params, &Var::constant(x.clone())).unwrap();
            assert_eq!(jac.shape(), &[5, 4, 3]);
            assert_eq!(y.value().data(), backbone.forward(&x).unwrap().data());
            let want = jacobian_by_outputs(&backbone, &x);
            assert!(max_relative_error(jac.value().data(), &want, 1e-3) < 1e-12, "{kind:?} {sizes:?}");
        }
    }
}

#[test]
fn fused_jacobian_matches_finite_differences() {
    let backbone = Backbone::init(BackboneKind::Kan, &[3, 4, 2], SplineSpec::default(), 12).unwrap();
    let x0 = vec![0.31, -1.17, 0.66];
    let (_, jac) = backbone
        .forward_jacobian_with(&backbone.bind_frozen(), &Var::constant(Tensor::new(vec![1, 3], x0.clone()).unwrap()))
        .unwrap();
    for o in 0..2 {
        let fd = finite_difference(
            |v| backbone.forward(&Tensor::new(vec![1, 3], v.to_vec()).unwrap()).unwrap().data()[o],
            &x0,
            1e-6,
        )
        .unwrap();
        let got: Vec<f64> = (0..3).map(|i| jac.value().data()[i * 2 + o]).collect();
        assert!(max_relative_error(&got, &fd, 1e-3) < 1e-6);
    }
}

#[test]
fn linear_jacobian_is_the_weight() {
    let w = Tensor::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.0, 3.0, 1.0]]).unwrap();
    let lin = Backbone::linear(w.clone(), Tensor::new(vec![2], vec![0.25, -1.0]).unwrap()).unwrap();
    let x = Var::constant(Tensor::from_rows(&[vec![1.0, 1.0, 2.0], vec![0.0, -1.0, 4.0]]).unwrap());
    let (_, jac) = lin.forward_jacobian_with(&lin.bind(), &x).unwrap();
    for n in 0..2 {
        for i in 0..3 {
            for o in 0..2 {
                assert_eq!(jac.value().data()[(n * 3 + i) * 2 + o], w.at2(o, i));
            }
        }
    }
}

#[test]
fn linear_backbone_is_affine() {
    let w = Tensor::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.0, 3.0, 1.0]]).unwrap();
    let b = Tensor::new(vec![2], vec![0.25, -1.0]).unwrap();
    let lin = Backbone::linear(w, b).unwrap();
    let y = lin.forward(&Tensor::from_rows(&[vec![1.0, 1.0, 2.0]]).unwrap()).unwrap();
    assert_eq!(y.data(), &[1.0 - 2.0 + 1.0 + 0.25, 3.0 + 2.0 - 1.0]);
}

#[test]
fn default_parameter_counts() {
    let sizes = [50, 128, 10];
    let kan = Backbone::init(BackboneKind::Kan, &sizes, SplineSpec::default(), 0).unwrap();
    let mlp = Backbone::init(BackboneKind::Mlp, &sizes, SplineSpec::default(), 0).unwrap();
    assert_eq!(kan.count_parameters(), (50 * 128 + 128 * 10) * 10);
    assert_eq!(mlp.count_parameters(), 128 * 51 + 10 * 129);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_of_unity(spec in spec_strategy(), t in 0.0f64..=1.0) {
        let x = spec.lo + t * (spec.hi - spec.lo);
        let b = spec.basis(x);
        prop_assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(b.iter().all(|&v| v >= -1e-15));
        prop_assert_eq!(b.len(), spec.grid_size + spec.degree);
    }

    #[test]
    fn basis_matches_reference(spec in spec_strategy(), t in -0.2f64..1.2) {
        let x = spec.lo + t * (spec.hi - spec.lo);
        prop_assert!(max_relative_error(&spec.basis(x), &reference_basis(&spec, x), 1.0) < 1e-11);
    }

    #[test]
    fn kan_has_more_parameters_than_mlp(sizes in proptest::collection::vec(1usize..20, 2..5), spec in spec_strategy()) {
        let kan = Backbone::init(BackboneKind::Kan, &sizes, spec, 0).unwrap();
        let mlp = Backbone::init(BackboneKind::Mlp, &sizes, spec, 0).unwrap();
        prop_assert!(kan.count_parameters() > mlp.count_parameters());
    }

    #[test]
    fn forward_preserves_batch(batch in 1usize..8, seed in 0u64..100) {
        let b = Backbone::init(BackboneKind::Kan, &[6, 4, 3], SplineSpec::default(), seed).unwrap();
        let y = b.forward(&Tensor::zeros(&[batch, 6])).unwrap();
        prop_assert_eq!(y.shape(), &[batch, 3]);
    }
}
