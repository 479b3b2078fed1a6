//! Disk round trips through the public API.

use panfuse::eval::{match_segments, pq};
use panfuse::pipeline::{fuse, Method, PipelineOptions};
use panfuse::store::{
    load_ensemble, read_panoptic_png, read_tensor, write_ensemble, write_panoptic_png, write_tensor, SegmentTable,
};
use panfuse::synth::{gen_ensemble, gen_scene, EnsembleLayout, JitterSpec, SceneSpec};
use panfuse::uncertainty::{bin_entropy, export_heatmap, UncertaintyMap};
use tempfile::TempDir;

fn jittered(seed: u64) -> panfuse::synth::SynthEnsemble {
    let scene = gen_scene(&SceneSpec {
        width: 80,
        height: 60,
        instances: 4,
        min_size: 10,
        max_size: 18,
        seed,
        ..SceneSpec::default()
    })
    .unwrap();
    gen_ensemble(
        &scene,
        EnsembleLayout {
            samples: 6,
            proposals: 16,
            mask_stride: 2,
        },
        JitterSpec {
            translate: 1,
            dropout: 0.1,
            class_noise: 0.5,
            mask_noise: 0.5,
            seed,
            ..JitterSpec::default()
        },
    )
    .unwrap()
}

#[test]
fn ensemble_survives_disk_and_fuses_identically() {
    let dir = TempDir::new().unwrap();
    let ens = jittered(3);
    let manifest = write_ensemble(&ens.batch, "img", dir.path()).unwrap();
    let (m, loaded) = load_ensemble(&manifest).unwrap();
    assert_eq!(m.image_id, "img");
    assert_eq!(loaded.logits(), ens.batch.logits());
    assert_eq!(loaded.mask_logits(), ens.batch.mask_logits());
    assert_eq!(loaded.catalog(), ens.batch.catalog());
    for method in Method::ALL {
        let opts = PipelineOptions {
            method,
            ..PipelineOptions::default()
        };
        let a = fuse(&ens.batch, &opts).unwrap();
        let b = fuse(&loaded, &opts).unwrap();
        assert_eq!(a.map, b.map, "{method:?}");
        assert_eq!(a.uncertainty, b.uncertainty, "{method:?}");
    }
}

#[test]
fn fused_outputs_read_back_exactly() {
    let dir = TempDir::new().unwrap();
    let ens = jittered(5);
    let f = fuse(&ens.batch, &PipelineOptions::default()).unwrap();

    let png = dir.path().join("pan.png");
    write_panoptic_png(&f.map, &SegmentTable::from_map(&f.map), &png).unwrap();
    let back = read_panoptic_png(&png).unwrap();
    assert_eq!(back.canonical(), f.map.canonical());
    let r = pq(&match_segments(&back, &f.map).unwrap(), ens.batch.catalog());
    assert_eq!(r.all.pq, 1.0);

    let t = dir.path().join("u.pftn");
    write_tensor(&f.uncertainty.to_tensor(), &t).unwrap();
    let u = UncertaintyMap::from_tensor(
        &read_tensor(&t).unwrap(),
        f.uncertainty.measure(),
        f.uncertainty.num_classes(),
    )
    .unwrap();
    assert_eq!(u.no_prediction(), f.uncertainty.no_prediction());
    for (a, b) in u.values().iter().zip(f.uncertainty.values()) {
        assert_eq!(*a, *b as f32 as f64);
    }

    let heat = dir.path().join("heat.png");
    export_heatmap(&f.uncertainty, &heat).unwrap();
    assert!(heat.metadata().unwrap().len() > 0);

    let h = bin_entropy(&[u], 10).unwrap();
    assert_eq!(h.total + h.no_prediction, f.map.len() as u64);
}

#[test]
fn more_samples_do_not_lower_quality_on_easy_scenes() {
    // With moderate jitter the fused map should match ground truth at least
    // as well as one sample does.
    let mut better_or_equal = 0;
    for seed in 0..10 {
        let scene = gen_scene(&SceneSpec {
            instances: 5,
            min_size: 16,
            seed,
            ..SceneSpec::default()
        })
        .unwrap();
        let ens = gen_ensemble(
            &scene,
            EnsembleLayout::default(),
            JitterSpec {
                translate: 1,
                mask_noise: 1.0,
                seed,
                ..JitterSpec::default()
            },
        )
        .unwrap();
        let score = |method| {
            let f = fuse(
                &ens.batch,
                &PipelineOptions {
                    method,
                    ..PipelineOptions::default()
                },
            )
            .unwrap();
            pq(&match_segments(&f.map, &scene.gt).unwrap(), &scene.catalog).all.pq
        };
        if score(Method::Ours) >= score(Method::Baseline) - 1e-9 {
            better_or_equal += 1;
        }
    }
    assert!(
        better_or_equal >= 8,
        "fused map beat or tied one sample in {better_or_equal}/10 scenes"
    );
}
