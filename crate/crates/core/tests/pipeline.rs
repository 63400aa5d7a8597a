use std::io::Write;

use mmgan_core::data::{self, DatasetHandle, DatasetKind};
use mmgan_core::kernel::{feature_sq_dist, KernelSpec};
use mmgan_core::loss::{self, LossConfig};
use mmgan_core::manifold::{ManifoldTracker, SphereManifold};
use mmgan_core::metrics::manifold_gap;
use mmgan_core::neural::Tensor;
use mmgan_core::rng::{self, Stream};
use mmgan_core::trainer::{self, TrainConfig};
use mmgan_core::Error;
use proptest::prelude::*;

fn short(steps: usize) -> TrainConfig {
    TrainConfig {
        steps,
        batch_size: 16,
        g_hidden: vec![8],
        d_hidden: vec![8, 8],
        ..TrainConfig::default()
    }
}

#[test]
fn short_runs_on_every_synthetic_dataset() {
    for (kind, modes) in [(DatasetKind::Ring8, 8), (DatasetKind::Grid25, 25), (DatasetKind::Rings2, 2)] {
        let data = DatasetHandle::new(kind);
        let out = trainer::train(&short(20), &data).unwrap();
        assert_eq!(out.history.len(), 20);
        assert!(out.history.iter().all(|r| r.is_finite()));
        let mut rng = rng::stream(0, Stream::Eval);
        let row = trainer::evaluate(&out.generator, Some(&out.discriminator), 200, &data, &mut rng).unwrap();
        assert!(row.modes_covered <= modes);
        assert!((row.coverage_fraction - row.modes_covered as f64 / modes as f64).abs() < 1e-15);
    }
}

#[test]
fn baseline_and_kernel_variants_train() {
    let data = DatasetHandle::new(DatasetKind::Ring8);
    let base = TrainConfig {
        baseline_mode: true,
        ..short(10)
    };
    assert!(trainer::train(&base, &data).unwrap().history.iter().all(|r| r.is_finite()));
    for kernel in [KernelSpec::Linear, KernelSpec::rbf_for_dim(8), KernelSpec::exp_for_dim(8)] {
        let cfg = TrainConfig {
            loss: LossConfig {
                kernel: Some(kernel),
                ..LossConfig::default()
            },
            ..short(10)
        };
        assert!(trainer::train(&cfg, &data).unwrap().history.iter().all(|r| r.is_finite()));
    }
}

#[test]
fn idx_files_load_plain_and_gzipped() {
    let tmp = tempfile::tempdir().unwrap();
    let pixels: Vec<u8> = (0..3 * 4).map(|i| (i * 20) as u8).collect();
    let images = data::encode_idx_images(3, 2, 2, &pixels);
    let plain = tmp.path().join("img-idx3-ubyte");
    std::fs::write(&plain, &images).unwrap();
    let gz = tmp.path().join("img-idx3-ubyte.gz");
    let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::fast());
    enc.write_all(&images).unwrap();
    std::fs::write(&gz, enc.finish().unwrap()).unwrap();
    let labels = tmp.path().join("lbl-idx1-ubyte");
    std::fs::write(&labels, data::encode_idx_labels(&[1, 2, 3])).unwrap();

    let a = data::load_idx(&plain, Some(&labels)).unwrap();
    let b = data::load_idx(&gz, None).unwrap();
    assert_eq!(a.images(), b.images());
    assert_eq!(a.dim(), 4);
    assert_eq!(a.labels(), Some(&[1u8, 2, 3][..]));

    let short_labels = tmp.path().join("short-idx1-ubyte");
    std::fs::write(&short_labels, data::encode_idx_labels(&[1, 2])).unwrap();
    assert!(matches!(data::load_idx(&plain, Some(&short_labels)), Err(Error::CountMismatch { .. })));
    std::fs::write(&plain, &images[..images.len() - 1]).unwrap();
    assert!(matches!(data::load_idx(&plain, None), Err(Error::Truncated { .. })));
}

#[test]
fn unloaded_idx_handle_refuses_to_sample() {
    let h = DatasetHandle::new(DatasetKind::IdxImages);
    let mut rng = rng::stream(0, Stream::Data);
    assert!(matches!(data::sample_batch(&h, 4, &mut rng), Err(Error::NotLoaded)));
}

fn cloud(n: usize, d: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-3.0f64..3.0, n * d).prop_map(move |v| Tensor::new(&[n, d], v).unwrap())
}

proptest! {
    #[test]
    fn kernel_distances_are_symmetric_and_non_negative(
        a in prop::collection::vec(-2.0f64..2.0, 4),
        b in prop::collection::vec(-2.0f64..2.0, 4),
        gamma in 0.01f64..2.0,
    ) {
        for k in [
            KernelSpec::Linear,
            KernelSpec::Rbf { gamma },
            KernelSpec::Exp { gamma },
            KernelSpec::Polynomial { degree: 2, coef0: 1.0 },
        ] {
            let ab = feature_sq_dist(&k, &a, &b).unwrap();
            let ba = feature_sq_dist(&k, &b, &a).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() <= 1e-9 * ab.abs().max(1.0));
            prop_assert!(feature_sq_dist(&k, &a, &a).unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn matching_gap_splits_the_plain_loss(real in cloud(6, 3), fake in cloud(6, 3)) {
        let (mr, mf) = (SphereManifold::fit(&real).unwrap(), SphereManifold::fit(&fake).unwrap());
        let gap = manifold_gap(&mr, &mf).unwrap();
        let plain = loss::l_g_plain(&mr, &mf).unwrap();
        prop_assert!(gap.centroid_gap >= 0.0 && gap.radius_gap >= 0.0);
        prop_assert!((gap.centroid_gap + gap.radius_gap - plain).abs() < 1e-12);
    }

    #[test]
    fn tracker_stays_between_its_inputs(
        radii in prop::collection::vec(0.0f64..5.0, 1..30),
        delta in 0.9f64..0.999,
    ) {
        let mut tr = ManifoldTracker::new(delta).unwrap();
        let (lo, hi) = radii.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &r| (l.min(r), h.max(r)));
        for &r in &radii {
            let m = tr.update(&SphereManifold::new(vec![r, -r], r).unwrap()).unwrap();
            prop_assert!(m.radius() >= lo - 1e-12 && m.radius() <= hi + 1e-12);
        }
    }

    #[test]
    fn final_generator_loss_is_non_negative(real in cloud(5, 4), fake in cloud(5, 4), beta in 0.0f64..2.0) {
        for kernel in [None, Some(KernelSpec::Rbf { gamma: 0.25 })] {
            let cfg = LossConfig { beta, kernel, ..LossConfig::default() };
            prop_assert!(loss::l_g_final(&cfg, &real, &fake).unwrap() >= 0.0);
        }
    }
}
