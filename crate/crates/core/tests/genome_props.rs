mod common;

use std::sync::Arc;

use accordion_core::genome::*;
use accordion_core::nn::*;
use common::random_spec;
use proptest::prelude::*;

fn semi_len(spec: &NetworkSpec) -> usize {
    spec.layers
        .iter()
        .map(|l| match l {
            LayerSpec::Conv2d(c) => c.filters,
            LayerSpec::Dense(d) => d.out_features,
            _ => 0,
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn encode_decode_is_bit_exact(seed in any::<u64>()) {
        let spec = random_spec(seed);
        let net = glorot_init(spec.clone(), seed ^ 0xabc).unwrap();
        let folded = encode(&net, Granularity::Folded);
        for g in Granularity::ALL {
            let chrom = encode(&net, g);
            let back = decode(&chrom, &spec).unwrap();
            for (a, b) in back.params().iter().zip(net.params()) {
                prop_assert_eq!(a.shape(), b.shape());
                prop_assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
            prop_assert!(encode(&net, g).bit_eq(&chrom), "encoding is stable");
            prop_assert!(refold(&folded, g).bit_eq(&chrom));
            prop_assert!(refold(&refold(&chrom, Granularity::Flat), g).bit_eq(&chrom));
        }
        prop_assert_eq!(encode(&net, Granularity::Folded).len(), spec.param_layers().len());
        prop_assert_eq!(encode(&net, Granularity::SemiFolded).len(), semi_len(&spec));
        prop_assert_eq!(encode(&net, Granularity::Flat).len(), spec.param_count());
    }

    #[test]
    fn gene_lengths_follow_their_source_layer(seed in any::<u64>()) {
        let spec = random_spec(seed);
        let chrom = encode(&Network::<f32>::zeros(spec.clone()).unwrap(), Granularity::SemiFolded);
        for gene in chrom.genes() {
            let param = &spec.param_layers()[gene.layer];
            let want = match spec.layers[param.layer] {
                LayerSpec::Conv2d(c) => c.kernel[0] * c.kernel[1] * c.in_channels,
                LayerSpec::Dense(d) => d.in_features,
                _ => unreachable!(),
            };
            prop_assert_eq!(gene.values.len(), want);
            prop_assert_eq!(gene.section, param.section);
            prop_assert_eq!(gene.kind, if gene.section == Section::FeatureExtraction { GeneKind::Filter } else { GeneKind::Neuron });
        }
    }
}

#[test]
fn section_lengths_need_semi_folded() {
    let net = glorot_init(Arc::new(mnist_custom()), 0).unwrap();
    assert_eq!(section_lengths(&encode(&net, Granularity::SemiFolded)).unwrap(), (86, 50));
    assert!(section_lengths(&encode(&net, Granularity::Folded)).is_err());
    assert!(section_lengths(&encode(&net, Granularity::Flat)).is_err());
}

#[test]
fn refold_to_same_granularity_is_identity() {
    let net = glorot_init(Arc::new(mnist_custom()), 0).unwrap();
    for g in Granularity::ALL {
        let c = encode(&net, g);
        assert!(refold(&c, g).bit_eq(&c));
    }
}
