use ndgrad::{Graph, Tensor};
use proptest::prelude::*;

fn conv_forward(x: &Tensor<f32>, k: &Tensor<f32>) -> (Tensor<f32>, Tensor<f32>) {
    let mut g = Graph::new();
    let xv = g.param(x.clone());
    let kv = g.param(k.clone());
    let y = g.conv2d(xv, kv, 2, 1).unwrap();
    let y = g.relu(y);
    let s = g.sum(y);
    g.backward(s).unwrap();
    (g.value(y).clone(), g.grad(kv).unwrap())
}

proptest! {
    #[test]
    fn softmax_lanes_sum_to_one(
        values in prop::collection::vec(-500.0f64..500.0, 24),
        axis in 0usize..3,
    ) {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(&[2, 3, 4], values).unwrap());
        let y = g.softmax_axis(x, axis).unwrap();
        let s = g.sum_axis(y, axis).unwrap();
        for v in g.value(s).data() {
            prop_assert!((v - 1.0).abs() <= 1e-6);
        }
        prop_assert!(g.value(y).data().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn forward_and_backward_are_deterministic(seed in any::<u32>()) {
        let f = |i: usize| (((i as u64 + 1) * (seed as u64 + 7)) % 97) as f32 / 48.0 - 1.0;
        let x = Tensor::from_fn(&[6, 6, 3], f);
        let k = Tensor::from_fn(&[3, 3, 3, 4], |i| f(i + 11));
        let (y1, g1) = conv_forward(&x, &k);
        let (y2, g2) = conv_forward(&x, &k);
        prop_assert_eq!(y1.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        y2.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(g1.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        g2.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
