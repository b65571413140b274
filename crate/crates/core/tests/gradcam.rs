//! Grad-CAM range, localisation and scale invariance on the full-size network.

use leafcnn::Tensor;
use leafcnn::gradcam::grad_cam;
use leafcnn::layers::Layer;
use leafcnn::model::{Model, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(rng: &mut ChaCha8Rng) -> Tensor<f32> {
    Tensor::from_fn([224, 224, 3], |_| rng.random::<f32>())
}

/// Every conv copies channel 0 through its (0, 0) tap, so after three pools
/// the last conv sees the 8x8 block maxima of input channel 0. The hidden unit
/// 0 sums the pooled channel 0 and only logit 0 reads it. Lighting one 8x8
/// block therefore activates exactly one cell of one feature map.
fn single_channel_model() -> Model<f32> {
    let mut m = Model::<f32>::new(ModelConfig::tomato_leaf(), 0).unwrap();
    let n = m.layers().len();
    for (i, layer) in m.layers_mut().iter_mut().enumerate() {
        match layer {
            Layer::Conv2d(c) => {
                c.weight.data_mut().fill(0.0);
                c.weight.set(&[0, 0, 0, 0], 1.0);
                c.bias.data_mut().fill(0.0);
            }
            Layer::Dense(d) => {
                d.weight.data_mut().fill(0.0);
                d.bias.data_mut().fill(0.0);
                if i == n - 2 {
                    d.weight.set(&[0, 0], 1.0);
                } else {
                    let (inputs, channels) = (d.inputs(), 128);
                    for k in (0..inputs).step_by(channels) {
                        d.weight.set(&[k, 0], 1.0);
                    }
                }
            }
            _ => {}
        }
    }
    m
}

fn lit_block(cell: (usize, usize)) -> Tensor<f32> {
    let mut x = Tensor::zeros([224, 224, 3]);
    for y in 8 * cell.0..8 * cell.0 + 8 {
        for xx in 8 * cell.1..8 * cell.1 + 8 {
            x.set(&[y, xx, 0], 1.0);
        }
    }
    x
}

/// Share of heatmap mass whose pixel centres lie within `reach` cells of the
/// cell centre on both axes (one 28x28 cell = 8 pixels).
fn mass_near(map: &Tensor<f32>, cell: (usize, usize), reach: f64) -> f64 {
    let (cy, cx) = (8.0 * cell.0 as f64 + 4.0, 8.0 * cell.1 as f64 + 4.0);
    let (mut inside, mut total) = (0.0, 0.0);
    for y in 0..224 {
        for x in 0..224 {
            let v = f64::from(map.get(&[y, x]));
            total += v;
            if ((y as f64 + 0.5 - cy).abs() < 8.0 * reach) && ((x as f64 + 0.5 - cx).abs() < 8.0 * reach) {
                inside += v;
            }
        }
    }
    inside / total
}

#[test]
fn random_cases_are_normalised_224() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..50 {
        let model = Model::<f32>::new(ModelConfig::tomato_leaf(), case).unwrap();
        let target = rng.random_range(0..2);
        let map = grad_cam(&model, &random_image(&mut rng), target, None).unwrap();
        assert_eq!(map.values.shape(), &[224, 224], "case {case}");
        assert!(map.values.data().iter().all(|v| (0.0..=1.0).contains(v)), "case {case}");
        let max = map.values.data().iter().copied().fold(0.0f32, f32::max);
        assert!(max == 1.0 || max == 0.0, "case {case}: max {max}");
        assert_eq!(map.source_layer, 11);
    }
}

#[test]
fn single_active_cell_is_localised() {
    let model = single_channel_model();
    for cell in [(0, 0), (5, 17), (13, 13), (27, 27), (20, 3)] {
        let map = grad_cam(&model, &lit_block(cell), 0, None).unwrap();
        let v = &map.values;
        let peak = v.data().iter().copied().fold(0.0f32, f32::max);
        assert_eq!(peak, 1.0);
        // the bilinear footprint of one cell reaches one cell out from its centre
        let share = mass_near(v, cell, 1.0);
        assert!(share >= 0.9, "cell {cell:?}: {share}");
        // and its own 8x8 block holds the densest part of it
        let own = mass_near(v, cell, 0.5);
        assert!(own > 0.5, "cell {cell:?}: {own}");
    }
}

#[test]
fn positive_logit_scaling_leaves_map_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..5 {
        let model = Model::<f32>::new(ModelConfig::tomato_leaf(), 100 + case).unwrap();
        let img = random_image(&mut rng);
        let target = (case % 2) as usize;
        let base = grad_cam(&model, &img, target, None).unwrap();
        let factor = rng.random_range(0.1f32..10.0);
        let mut scaled = model.clone();
        let n = scaled.layers().len();
        if let Layer::Dense(d) = &mut scaled.layers_mut()[n - 2] {
            for row in d.weight.data_mut().chunks_mut(2) {
                row[target] *= factor;
            }
            d.bias.data_mut()[target] *= factor;
        }
        let again = grad_cam(&scaled, &img, target, None).unwrap();
        assert!(base.values.max_abs_diff(&again.values) <= 1e-5, "case {case}");
    }
}
