//! Flow-level correctness properties: invertibility at depth, analytic
//! log-determinants against a finite-difference Jacobian oracle, density
//! normalization by quadrature, and the single-vs-double precision effect.

use flowguard_core::data::{DatasetHandle, Provenance};
use flowguard_core::flow::{train_flow, FlowConfig, FlowModel, ScalingVariant, TrainConfig};
use flowguard_core::math::LN_2PI;
use flowguard_core::mlp::Init;
use flowguard_core::tensor::{Precision, Tensor};
use flowguard_core::DetRng;

fn random_model(dim: usize, blocks: usize, seed: u64) -> FlowModel {
    let cfg = FlowConfig {
        dim,
        blocks,
        hidden: vec![16, 16],
        variant: ScalingVariant::HalfSigmoid,
        mixing_every: 2,
        factor_out_after: None,
        standardize: false,
        final_init: Init::FanIn,
    };
    FlowModel::build(&cfg, &mut DetRng::from_seed(seed)).unwrap()
}

/// Invertibility at full depth: 16 blocks, 1024 unit-scale inputs, sup-norm
/// round-trip error within 1e-9 in double precision.
#[test]
fn sixteen_block_invertibility_holds_to_1e9() {
    let model = random_model(16, 16, 42);
    let mut rng = DetRng::from_seed(4242);
    let mut worst = 0.0f64;
    for _ in 0..1024 {
        let x = Tensor::vector(rng.normal_vec(16));
        let code = model.forward(&x).unwrap();
        let back = model.inverse(&code.z).unwrap();
        for i in 0..16 {
            worst = worst.max((back.get(i) - x.get(i)).abs());
        }
    }
    assert!(worst <= 1e-9, "max round-trip deviation {worst}");
}

/// Finite-difference Jacobian, row i = ∂z/∂x_i.
fn numeric_jacobian(model: &FlowModel, x: &[f64], h: f64) -> Vec<f64> {
    let d = x.len();
    let mut jac = vec![0.0; d * d];
    for i in 0..d {
        let mut hi = x.to_vec();
        let mut lo = x.to_vec();
        hi[i] += h;
        lo[i] -= h;
        let zh = model.forward(&Tensor::vector(hi)).unwrap().z;
        let zl = model.forward(&Tensor::vector(lo)).unwrap().z;
        for j in 0..d {
            jac[i * d + j] = (zh.get(j) - zl.get(j)) / (2.0 * h);
        }
    }
    jac
}

/// |det| by Gaussian elimination with partial pivoting.
fn log_abs_det(mut a: Vec<f64>, d: usize) -> f64 {
    let mut log_det = 0.0;
    for c in 0..d {
        let mut p = c;
        for r in c + 1..d {
            if a[r * d + c].abs() > a[p * d + c].abs() {
                p = r;
            }
        }
        if p != c {
            for j in 0..d {
                a.swap(c * d + j, p * d + j);
            }
        }
        log_det += a[c * d + c].abs().ln();
        for r in c + 1..d {
            let f = a[r * d + c] / a[c * d + c];
            for j in c..d {
                a[r * d + j] -= f * a[c * d + j];
            }
        }
    }
    log_det
}

#[test]
fn accumulated_logdet_matches_numeric_jacobian_determinant() {
    for (seed, d) in [(1u64, 2usize), (2, 4), (3, 6)] {
        let model = random_model(d, 6, seed);
        let mut rng = DetRng::from_seed(seed ^ 0xabcd);
        for _ in 0..8 {
            let x = rng.normal_vec(d);
            let analytic = model.forward(&Tensor::vector(x.clone())).unwrap().log_det;
            let jac = numeric_jacobian(&model, &x, 1e-5);
            let numeric = log_abs_det(jac, d);
            let rel = (analytic - numeric).abs() / numeric.abs().max(1e-6);
            assert!(
                rel <= 1e-4,
                "d={d}: analytic {analytic} vs numeric {numeric} (rel {rel})"
            );
        }
    }
}

#[test]
fn logdet_oracle_also_covers_the_factored_architecture() {
    let cfg = FlowConfig {
        dim: 6,
        blocks: 6,
        hidden: vec![8],
        factor_out_after: Some(2),
        standardize: true,
        final_init: Init::FanIn,
        ..FlowConfig::default()
    };
    let model = FlowModel::build(&cfg, &mut DetRng::from_seed(9)).unwrap();
    let mut rng = DetRng::from_seed(10);
    for _ in 0..4 {
        let x = rng.normal_vec(6);
        let analytic = model.forward(&Tensor::vector(x.clone())).unwrap().log_det;
        let numeric = log_abs_det(numeric_jacobian(&model, &x, 1e-5), 6);
        let rel = (analytic - numeric).abs() / numeric.abs().max(1e-6);
        assert!(rel <= 1e-4, "analytic {analytic} vs numeric {numeric}");
    }
}

fn gaussian_handle(n: usize, d: usize, seed: u64) -> DatasetHandle {
    let mut rng = DetRng::from_seed(seed);
    let rows: Vec<f32> = (0..n * d).map(|_| rng.normal() as f32).collect();
    DatasetHandle::from_rows(d, rows, None, Provenance::InDist("gauss".into()), seed).unwrap()
}

/// Change-of-variables consistency: exp(log_density) of a trained 2-D
/// model integrates to 1 on a grid quadrature over [−6, 6]².
#[test]
fn trained_density_integrates_to_one() {
    let cfg = FlowConfig {
        dim: 2,
        blocks: 4,
        hidden: vec![16],
        mixing_every: 2,
        standardize: true,
        ..FlowConfig::default()
    };
    let data = gaussian_handle(2048, 2, 5);
    let mut model = FlowModel::build_for_data(&cfg, &data, &mut DetRng::from_seed(6)).unwrap();
    let tc = TrainConfig {
        iterations: 300,
        batch_size: 256,
        learning_rate: 5e-3,
        ..TrainConfig::default()
    };
    train_flow(&mut model, &data, &tc, &DetRng::from_seed(7)).unwrap();

    let n = 240;
    let lo = -6.0;
    let step = 12.0 / n as f64;
    let mut integral = 0.0;
    for i in 0..n {
        for j in 0..n {
            let x = lo + (i as f64 + 0.5) * step;
            let y = lo + (j as f64 + 0.5) * step;
            let lp = model.log_density(&Tensor::vector(vec![x, y])).unwrap();
            integral += lp.exp() * step * step;
        }
    }
    assert!(
        (integral - 1.0).abs() <= 0.02,
        "density integrated to {integral}"
    );
}

/// Training on standard Gaussian data reaches its differential entropy,
/// and the mean NLL agrees with the per-iteration loss definition.
#[test]
fn trained_nll_reaches_gaussian_entropy() {
    let cfg = FlowConfig {
        dim: 2,
        blocks: 4,
        hidden: vec![16],
        standardize: true,
        ..FlowConfig::default()
    };
    let data = gaussian_handle(2048, 2, 11);
    let mut model = FlowModel::build_for_data(&cfg, &data, &mut DetRng::from_seed(12)).unwrap();
    let tc = TrainConfig {
        iterations: 400,
        batch_size: 256,
        learning_rate: 5e-3,
        ..TrainConfig::default()
    };
    train_flow(&mut model, &data, &tc, &DetRng::from_seed(13)).unwrap();
    let mut nll = 0.0;
    for i in 0..data.len() {
        nll -= model
            .log_density(&Tensor::vector(data.row_f64(i)))
            .unwrap();
    }
    nll /= data.len() as f64;
    let entropy = 1.0 + LN_2PI;
    assert!((nll - entropy).abs() < 0.1, "NLL {nll} vs entropy {entropy}");
}

/// Monotone precision effect: per-sample single-precision round-trip error
/// at least the double-precision one on ≥ 99% of 1024 samples.
#[test]
fn single_precision_roundtrip_error_dominates_double() {
    let model = random_model(8, 8, 77);
    let mut rng = DetRng::from_seed(78);
    let mut hold = 0usize;
    let n = 1024;
    for _ in 0..n {
        let xs: Vec<f64> = (0..8).map(|_| rng.uniform()).collect();
        let x64 = Tensor::vector(xs);
        let x32 = x64.cast(Precision::Single);

        let rt64 = {
            let z = model.forward(&x64).unwrap().z;
            let b = model.inverse(&z).unwrap();
            (0..8)
                .map(|i| (b.get(i) - x64.get(i)).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let rt32 = {
            let z = model.forward(&x32).unwrap().z;
            let b = model.inverse(&z).unwrap();
            (0..8)
                .map(|i| (b.get(i) - x32.get(i)).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        if rt32 >= rt64 {
            hold += 1;
        }
    }
    assert!(
        hold as f64 / n as f64 >= 0.99,
        "single >= double held on only {hold}/{n} samples"
    );
}

/// Additive-variant blocks contribute exactly zero log-determinant.
#[test]
fn additive_blocks_have_zero_logdet() {
    let cfg = FlowConfig {
        dim: 6,
        blocks: 4,
        hidden: vec![8],
        variant: ScalingVariant::Additive,
        mixing_every: 0,
        standardize: false,
        final_init: Init::FanIn,
        ..FlowConfig::default()
    };
    let model = FlowModel::build(&cfg, &mut DetRng::from_seed(3)).unwrap();
    let mut rng = DetRng::from_seed(4);
    for _ in 0..16 {
        let x = Tensor::vector(rng.normal_vec(6));
        let code = model.forward(&x).unwrap();
        assert_eq!(code.log_det, 0.0);
        let back = model.inverse(&code.z).unwrap();
        for i in 0..6 {
            assert!((back.get(i) - x.get(i)).abs() <= 1e-10);
        }
    }
}
