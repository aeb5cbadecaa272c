use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::gradcheck::{check, check_params};
use crate::autodiff::Tensor;
use crate::error::Error;
use crate::tiling::{group_member, pixel_shuffle};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand4(shape: (usize, usize, usize, usize), seed: u64) -> Tensor {
    let mut r = rng(seed);
    Array4::from_shape_simple_fn(shape, || r.gen_range(-1.0..1.0))
}

/// Overwrites every parameter (GRN included) with small random values.
fn scramble(store: &mut ParamStore, seed: u64) {
    let mut r = rng(seed);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        store.get_mut(id).mapv_inplace(|_| r.gen_range(-0.5..0.5));
    }
}

fn zero_all(store: &mut ParamStore) {
    store.zero_prefix("");
}

fn weighted_sum(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let w = tape.constant(rand4(tape.value(y).dim(), seed ^ 0xabc));
    let p = tape.mul(y, w)?;
    Ok(tape.sum(p))
}

fn small_lfmn(scale: usize, blocks: usize, features: usize) -> LfmnConfig {
    LfmnConfig {
        scale,
        features,
        blocks,
        ..LfmnConfig::default()
    }
}

#[test]
fn eccm_width() {
    assert_eq!(eccm_hidden(32), 40);
    assert_eq!(eccm_hidden(16), 20);
    assert_eq!(eccm_hidden(6), 7);
}

#[test]
fn odd_features_rejected() {
    let mut store = ParamStore::new();
    let err = LfmnParams::register(&mut store, "m", &small_lfmn(2, 1, 5), &mut rng(0)).unwrap_err();
    assert!(matches!(err, Error::Config { ref field, .. } if field == "m.features"));
}

#[test]
fn lfm_zero_weights_halves_input() {
    let mut store = ParamStore::new();
    let p = LfmnParams::register(&mut store, "m", &small_lfmn(2, 1, 4), &mut rng(1)).unwrap();
    zero_all(&mut store);
    let fv = rand4((1, 4, 5, 5), 2);
    let mut t = Tape::new();
    let f = t.constant(fv.clone());
    let y = lfm_forward(&mut t, &store, &p.blocks[0].0, f).unwrap();
    assert_eq!(t.value(y), &fv.mapv(|v| v * 0.5));

    let z = t.constant(Tensor::zeros((1, 4, 5, 5)));
    let y = lfm_forward(&mut t, &store, &p.blocks[0].0, z).unwrap();
    assert!(t.value(y).iter().all(|&v| v == 0.0));
}

#[test]
fn lfm_bounded_by_input() {
    let mut store = ParamStore::new();
    let p = LfmnParams::register(&mut store, "m", &small_lfmn(2, 1, 4), &mut rng(3)).unwrap();
    scramble(&mut store, 4);
    let fv = rand4((1, 4, 6, 6), 5);
    let mut t = Tape::new();
    let f = t.constant(fv.clone());
    let y = lfm_forward(&mut t, &store, &p.blocks[0].0, f).unwrap();
    for (o, i) in t.value(y).iter().zip(fv.iter()) {
        assert!(o.abs() <= i.abs());
    }
}

#[test]
fn lfm_gradients() {
    let mut store = ParamStore::new();
    let p = LfmnParams::register(&mut store, "m", &small_lfmn(2, 1, 4), &mut rng(6)).unwrap();
    scramble(&mut store, 7);
    let fv = rand4((1, 4, 6, 6), 8);
    let build_in = |t: &mut Tape, v: &[Var]| {
        let y = lfm_forward(t, &store, &p.blocks[0].0, v[0])?;
        weighted_sum(t, y, 9)
    };
    assert!(check(std::slice::from_ref(&fv), 1e-6, build_in).unwrap().rel_error < 1e-5);
    let build_p = |t: &mut Tape, s: &ParamStore| {
        let f = t.constant(fv.clone());
        let y = lfm_forward(t, s, &p.blocks[0].0, f)?;
        weighted_sum(t, y, 9)
    };
    assert!(check_params(&store, 8, 1e-6, build_p).unwrap().rel_error < 1e-5);
}

#[test]
fn eccm_zero_and_gradients() {
    let mut store = ParamStore::new();
    let p = LfmnParams::register(&mut store, "m", &small_lfmn(2, 1, 4), &mut rng(10)).unwrap();
    let fv = rand4((1, 4, 5, 5), 11);
    let mut zeroed = store.clone();
    zero_all(&mut zeroed);
    let mut t = Tape::new();
    let f = t.constant(fv.clone());
    let y = eccm_forward(&mut t, &zeroed, &p.blocks[0].1, f).unwrap();
    assert!(t.value(y).iter().all(|&v| v == 0.0));

    scramble(&mut store, 12);
    let build = |t: &mut Tape, s: &ParamStore| {
        let f = t.constant(fv.clone());
        let y = eccm_forward(t, s, &p.blocks[0].1, f)?;
        weighted_sum(t, y, 13)
    };
    assert!(check_params(&store, 8, 1e-6, build).unwrap().rel_error < 1e-5);
}

#[test]
fn lfmm_zero_params_scales_by_one_and_a_half() {
    // sigmoid(0) = 1/2 keeps half of F in the modulation branch; the mixer branch vanishes
    let mut store = ParamStore::new();
    let cfg = small_lfmn(2, 1, 4);
    let p = LfmnParams::register(&mut store, "m", &cfg, &mut rng(14)).unwrap();
    zero_all(&mut store);
    let fv = rand4((1, 4, 5, 5), 15);
    let mut t = Tape::new();
    let f = t.constant(fv.clone());
    let y = lfmm_forward(&mut t, &store, &p.blocks[0], &cfg, f).unwrap();
    assert_eq!(t.value(y), &fv.mapv(|v| v * 0.5 + v));
}

#[test]
fn lfmm_matches_manual_composition() {
    let mut store = ParamStore::new();
    let cfg = small_lfmn(2, 1, 4);
    let p = LfmnParams::register(&mut store, "m", &cfg, &mut rng(16)).unwrap();
    scramble(&mut store, 17);
    let fv = rand4((1, 4, 5, 5), 18);
    let mut t = Tape::new();
    let f = t.constant(fv.clone());
    let y = lfmm_forward(&mut t, &store, &p.blocks[0], &cfg, f).unwrap();
    let a = lfm_forward(&mut t, &store, &p.blocks[0].0, f).unwrap();
    let f1 = t.add(a, f).unwrap();
    let b = eccm_forward(&mut t, &store, &p.blocks[0].1, f1).unwrap();
    let f2 = t.add(b, f1).unwrap();
    assert_eq!(t.value(y), t.value(f2));
}

#[test]
fn lfmm_stacked_gradients() {
    let mut store = ParamStore::new();
    let cfg = small_lfmn(2, 2, 4);
    let p = LfmnParams::register(&mut store, "m", &cfg, &mut rng(19)).unwrap();
    scramble(&mut store, 20);
    let fv = rand4((1, 4, 5, 5), 21);
    let build = |t: &mut Tape, v: &[Var]| {
        let mut f = v[0];
        for b in &p.blocks {
            f = lfmm_forward(t, &store, b, &cfg, f)?;
        }
        weighted_sum(t, f, 22)
    };
    assert!(check(&[fv], 1e-6, build).unwrap().rel_error < 1e-5);
}

#[test]
fn lfmn_zero_is_pixel_shuffle() {
    for r in 1..=4 {
        let mut store = ParamStore::new();
        let p = LfmnParams::register(&mut store, "m", &small_lfmn(r, 2, 6), &mut rng(23)).unwrap();
        zero_all(&mut store);
        let iv = rand4((1, r * r, 3, 5), 24);
        let mut t = Tape::new();
        let i = t.constant(iv.clone());
        let y = lfmn_forward(&mut t, &store, &p, i).unwrap();
        let tiles = iv.index_axis(ndarray::Axis(0), 0).to_owned();
        let expect = pixel_shuffle(&crate::tiling::TileStack::new(tiles, r).unwrap(), r).unwrap();
        assert_eq!(t.value(y).dim(), (1, 1, 3 * r, 5 * r));
        assert_eq!(t.value(y).index_axis(ndarray::Axis(0), 0).index_axis(ndarray::Axis(0), 0), expect);
    }
}

#[test]
fn lfmn_channel_mismatch() {
    let mut store = ParamStore::new();
    let p = LfmnParams::register(&mut store, "m", &small_lfmn(2, 1, 4), &mut rng(25)).unwrap();
    let mut t = Tape::new();
    let i = t.constant(Tensor::zeros((1, 9, 4, 4)));
    assert!(matches!(lfmn_forward(&mut t, &store, &p, i), Err(Error::Dimension(_))));
}

#[test]
fn lfmn_gradients() {
    let mut store = ParamStore::new();
    let p = LfmnParams::register(&mut store, "m", &small_lfmn(2, 2, 4), &mut rng(26)).unwrap();
    scramble(&mut store, 27);
    let iv = rand4((1, 4, 4, 4), 28);
    let build = |t: &mut Tape, s: &ParamStore| {
        let i = t.constant(iv.clone());
        let y = lfmn_forward(t, s, &p, i)?;
        weighted_sum(t, y, 29)
    };
    assert!(check_params(&store, 6, 1e-6, build).unwrap().rel_error < 1e-4);
    let build_in = |t: &mut Tape, v: &[Var]| {
        let y = lfmn_forward(t, &store, &p, v[0])?;
        weighted_sum(t, y, 29)
    };
    assert!(check(std::slice::from_ref(&iv), 1e-6, build_in).unwrap().rel_error < 1e-4);
}

#[test]
fn lfmn_toggles_keep_shape() {
    for (g, l, e) in [(false, true, true), (true, false, true), (true, true, false), (false, false, false)] {
        let cfg = LfmnConfig {
            use_grn: g,
            use_lfm: l,
            use_eccm: e,
            ..small_lfmn(2, 2, 4)
        };
        let mut store = ParamStore::new();
        let p = LfmnParams::register(&mut store, "m", &cfg, &mut rng(30)).unwrap();
        let mut t = Tape::new();
        let i = t.constant(rand4((1, 4, 4, 4), 31));
        let y = lfmn_forward(&mut t, &store, &p, i).unwrap();
        assert_eq!(t.value(y).dim(), (1, 1, 8, 8));
    }
}

fn backbone(store: &mut ParamStore, name: &str, widths: Vec<usize>, cin: usize, cout: usize) -> BackboneParams {
    BackboneParams::register(store, name, &BackboneConfig { widths }, cin, cout, &mut rng(32)).unwrap()
}

#[test]
fn generator_and_encoder_shapes() {
    let mut store = ParamStore::new();
    let g = backbone(&mut store, "g", vec![4, 8, 8], 4, 4);
    let e = backbone(&mut store, "e", vec![4, 8, 8], 8, 4);
    let mut t = Tape::new();
    let x = t.constant(rand4((1, 4, 32, 32), 33));
    let y = generator_forward(&mut t, &store, &g, x).unwrap();
    assert_eq!(t.value(y).dim(), (1, 4, 32, 32));
    let x = t.constant(rand4((1, 8, 32, 32), 34));
    let y = encoder_forward(&mut t, &store, &e, x).unwrap();
    assert_eq!(t.value(y).dim(), (1, 4, 32, 32));
}

#[test]
fn backbone_divisibility() {
    let mut store = ParamStore::new();
    let g = backbone(&mut store, "g", vec![2, 2, 2], 1, 1);
    let mut t = Tape::new();
    let x = t.constant(Tensor::zeros((1, 1, 6, 8)));
    assert!(matches!(g.forward(&mut t, &store, x), Err(Error::Dimension(_))));
}

#[test]
fn zero_backbone_outputs_bias() {
    let mut store = ParamStore::new();
    let g = backbone(&mut store, "g", vec![3, 4], 4, 4);
    zero_all(&mut store);
    let out_bias = store.find("g.out.bias").unwrap();
    let bias = [0.1, 0.2, 0.3, 0.4];
    store.get_mut(out_bias).assign(&ndarray::arr1(&bias).into_dyn());
    let mut t = Tape::new();
    let x = t.constant(rand4((1, 4, 8, 8), 35));
    let y = generator_forward(&mut t, &store, &g, x).unwrap();
    for (c, &want) in bias.iter().enumerate() {
        assert!(t.value(y).index_axis(ndarray::Axis(1), c).iter().all(|&v| v == want));
    }
}

#[test]
fn backbone_gradients() {
    let mut store = ParamStore::new();
    let g = backbone(&mut store, "g", vec![3, 4], 2, 2);
    scramble(&mut store, 36);
    let xv = rand4((1, 2, 4, 4), 37);
    let build = |t: &mut Tape, s: &ParamStore| {
        let x = t.constant(xv.clone());
        let y = g.forward(t, s, x)?;
        weighted_sum(t, y, 38)
    };
    assert!(check_params(&store, 6, 1e-6, build).unwrap().rel_error < 1e-5);
    let build_in = |t: &mut Tape, v: &[Var]| {
        let y = g.forward(t, &store, v[0])?;
        weighted_sum(t, y, 38)
    };
    assert!(check(std::slice::from_ref(&xv), 1e-6, build_in).unwrap().rel_error < 1e-5);
}

#[test]
fn zero_pyramid_is_shuffle4() {
    let mut store = ParamStore::new();
    let p = PyramidParams::register(&mut store, "p", &small_lfmn(2, 1, 4), &mut rng(39)).unwrap();
    zero_all(&mut store);
    let xv = rand4((1, 16, 16, 16), 40);
    let mut t = Tape::new();
    let x = t.constant(xv.clone());
    let y = pyramid_merge(&mut t, &store, &p, x).unwrap();
    let direct = t.pixel_shuffle(x, 4).unwrap();
    assert_eq!(t.value(y).dim(), (1, 1, 64, 64));
    assert_eq!(t.value(y), t.value(direct));
}

#[test]
fn pyramid_stage1_is_shared() {
    let mut store = ParamStore::new();
    let p = PyramidParams::register(&mut store, "p", &small_lfmn(2, 1, 4), &mut rng(41)).unwrap();
    scramble(&mut store, 42);
    let xv = rand4((1, 16, 4, 4), 43);
    // swap the members of groups 0 and 3
    let mut swapped = xv.clone();
    for k in 0..4 {
        let a = group_member(0, k);
        let b = group_member(3, k);
        swapped.index_axis_mut(ndarray::Axis(1), a).assign(&xv.index_axis(ndarray::Axis(1), b));
        swapped.index_axis_mut(ndarray::Axis(1), b).assign(&xv.index_axis(ndarray::Axis(1), a));
    }
    let mut t = Tape::new();
    let x = t.constant(xv);
    let xs = t.constant(swapped);
    let o = pyramid_stage1(&mut t, &store, &p, x).unwrap();
    let os = pyramid_stage1(&mut t, &store, &p, xs).unwrap();
    assert_eq!(t.value(o[0]), t.value(os[3]));
    assert_eq!(t.value(o[3]), t.value(os[0]));
    assert_eq!(t.value(o[1]), t.value(os[1]));
}

#[test]
fn pyramid_wrong_channels() {
    let mut store = ParamStore::new();
    let p = PyramidParams::register(&mut store, "p", &small_lfmn(2, 1, 4), &mut rng(44)).unwrap();
    let mut t = Tape::new();
    let x = t.constant(Tensor::zeros((1, 4, 4, 4)));
    assert!(matches!(pyramid_merge(&mut t, &store, &p, x), Err(Error::Dimension(_))));
}

#[test]
fn checkpoint_round_trip() {
    let mut store = ParamStore::new();
    PyramidParams::register(&mut store, "p", &small_lfmn(2, 1, 4), &mut rng(45)).unwrap();
    store.add("meta.step", ndarray::ArrayD::from_elem(ndarray::IxDyn(&[]), 7.0));
    let bytes = checkpoint::encode(&store);
    assert_eq!(&bytes[..9], b"HOLOTILE1");
    let back = checkpoint::decode(&bytes, std::path::Path::new("mem")).unwrap();
    assert_eq!(back, store);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.bin");
    checkpoint::save(&path, &store).unwrap();
    assert_eq!(checkpoint::load(&path).unwrap(), store);
}

#[test]
fn checkpoint_rejects_garbage() {
    let p = std::path::Path::new("x");
    assert!(matches!(checkpoint::decode(b"NOTHOLO", p), Err(Error::Format { .. })));
    let mut store = ParamStore::new();
    store.add("a", ndarray::ArrayD::zeros(ndarray::IxDyn(&[3])));
    let bytes = checkpoint::encode(&store);
    assert!(checkpoint::decode(&bytes[..bytes.len() - 1], p).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(checkpoint::decode(&extra, p).is_err());
    assert!(matches!(checkpoint::load(std::path::Path::new("/nonexistent/w.bin")), Err(Error::Io { .. })));
}
