use emofreq::ingest::EmotionLabel;
use emofreq::spectral::{fftshift, make_kernels, BandKernel, Fft2Plan, KernelParams, Orientation};
use emofreq::synth::{generate, SynthCorpus, SynthSpec};

/// Share of the spectral energy of `image - face` that falls inside each
/// image's assigned band; the minimum over the corpus.
fn min_band_share(corpus: &SynthCorpus) -> f64 {
    let n = corpus.spec.size;
    let plan = Fft2Plan::new(n, n).unwrap();
    let mut worst = f64::INFINITY;
    for (i, img) in corpus.images.iter().enumerate() {
        let subject = i / corpus.spec.bands.len();
        let band = corpus.spec.bands[i % corpus.spec.bands.len()];
        assert_eq!(band.label, img.label);
        let residual: Vec<f64> = img
            .image
            .data()
            .iter()
            .zip(&corpus.faces[subject])
            .map(|(a, b)| a - b)
            .collect();
        let spec = fftshift(&plan.forward_real(n, n, &residual).unwrap());
        let mask = BandKernel::new(0, Orientation::HorizontalBand, band.lo, band.hi - band.lo, (n, n), true)
            .unwrap()
            .mask();
        let (mut inside, mut total) = (0.0, 0.0);
        for (c, m) in spec.data().iter().zip(mask) {
            let e = c.norm_sqr();
            total += e;
            if m == 1 {
                inside += e;
            }
        }
        worst = worst.min(inside / total);
    }
    worst
}

#[test]
fn signatures_are_band_confined() {
    let clean = generate(&SynthSpec {
        noise_std: 0.0,
        ..SynthSpec::default()
    })
    .unwrap();
    assert!(min_band_share(&clean) >= 0.999);

    let noisy = generate(&SynthSpec::default()).unwrap();
    assert!(min_band_share(&noisy) >= 0.95);
}

/// Argmax of mean |band image| over the kernels holding each emotion's signature.
fn oracle_accuracy(corpus: &SynthCorpus) -> f64 {
    let kernels = make_kernels(&KernelParams::default(), (128, 128)).unwrap();
    let carriers: Vec<(EmotionLabel, BandKernel)> = corpus
        .spec
        .bands
        .iter()
        .map(|b| {
            let k = kernels
                .iter()
                .find(|k| k.offset <= b.lo && b.lo < k.offset + k.width)
                .expect("every signature sits inside a kernel");
            (b.label, k.clone())
        })
        .collect();
    let bank: Vec<BandKernel> = carriers.iter().map(|c| c.1.clone()).collect();
    let plan = Fft2Plan::new(128, 128).unwrap();
    let hits = corpus
        .images
        .iter()
        .filter(|img| {
            let bands = plan.band_images(&img.image, &bank).unwrap();
            let strength: Vec<f64> = bands
                .iter()
                .map(|b| b.plane.iter().map(|v| v.abs()).sum::<f64>() / b.plane.len() as f64)
                .collect();
            let best = (0..strength.len())
                .max_by(|&a, &b| strength[a].total_cmp(&strength[b]))
                .unwrap();
            carriers[best].0 == img.label
        })
        .count();
    hits as f64 / corpus.images.len() as f64
}

#[test]
fn oracle_classifier_is_perfect() {
    let clean = generate(&SynthSpec {
        noise_std: 0.0,
        ..SynthSpec::default()
    })
    .unwrap();
    assert_eq!(oracle_accuracy(&clean), 1.0);
    assert_eq!(oracle_accuracy(&generate(&SynthSpec::default()).unwrap()), 1.0);
}

#[test]
fn carrier_kernels_follow_the_stride() {
    let kernels = make_kernels(&KernelParams::default(), (128, 128)).unwrap();
    let indices: Vec<usize> = SynthSpec::default()
        .bands
        .iter()
        .map(|b| {
            kernels
                .iter()
                .find(|k| k.offset <= b.lo && b.lo < k.offset + k.width)
                .unwrap()
                .index
        })
        .collect();
    assert_eq!(indices, [1, 5, 9, 13, 17]);
}
