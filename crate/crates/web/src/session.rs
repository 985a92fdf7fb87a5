//! The demo's state and operations, free of any browser types so they can
//! be exercised natively.

use dmbp::dmbp::{dmbp_attribution, DmbpConfig, LossRecord};
use dmbp::imaging::{
    decode_image, heatmap_png, resize_to_spec, AttributionMap, ModelImage, Overlay,
};
use dmbp::manifest::ImageManifest;
use dmbp::method::{attribute, Method, MethodConfig};
use dmbp::metrics::{softmax, InsertionCurve, Metric, MetricConfig};
use dmbp::network::{ArchFile, Network, WeightFile};
use dmbp::Result;

const ARCH: &str = include_str!("../../../fixtures/toy_a/arch.json");
const WEIGHTS: &[u8] = include_bytes!("../../../fixtures/toy_a/model.dmbpw");
const MANIFEST: &str = include_str!("../../../fixtures/toy_a/manifest.json");

macro_rules! samples {
    ($($n:literal),*) => {
        [$(include_bytes!(concat!("../../../fixtures/toy_a/images/img", $n, ".png")).as_slice()),*]
    };
}

const SAMPLES: [&[u8]; 8] = samples!("00", "01", "02", "03", "04", "05", "06", "07");

/// One computed map with what the page shows next to it.
#[derive(Debug, Clone)]
pub struct Explanation {
    pub map: AttributionMap,
    pub heatmap: Vec<u8>,
    pub overlay: Vec<u8>,
    /// Empty unless the method was dmbp.
    pub loss_trace: Vec<LossRecord>,
}

pub struct Session {
    net: Network<f32>,
    targets: Vec<usize>,
}

impl Session {
    /// The embedded two-class toy network with its sample images.
    pub fn toy() -> Result<Self> {
        let net = Network::build(
            &ArchFile::from_json(ARCH)?,
            &WeightFile::from_bytes(WEIGHTS)?,
        )?;
        let targets = ImageManifest::from_json(MANIFEST)?
            .images
            .iter()
            .take(SAMPLES.len())
            .map(|e| e.target)
            .collect();
        Ok(Self { net, targets })
    }

    pub fn network(&self) -> &Network<f32> {
        &self.net
    }

    pub fn sample_count(&self) -> usize {
        SAMPLES.len()
    }

    pub fn sample_png(&self, index: usize) -> Option<&'static [u8]> {
        SAMPLES.get(index).copied()
    }

    /// Ground-truth class of a sample image.
    pub fn sample_target(&self, index: usize) -> Option<usize> {
        self.targets.get(index).copied()
    }

    /// Decodes an encoded image and brings it to the network's input size.
    pub fn prepare(&self, encoded: &[u8]) -> Result<ModelImage> {
        let raw = decode_image(encoded)?;
        let raw = match self.net.preprocess() {
            Some(spec) => resize_to_spec(&raw, spec)?,
            None => raw,
        };
        ModelImage::from_raw(raw, self.net.preprocess())
    }

    pub fn probabilities(&self, encoded: &[u8]) -> Result<Vec<f64>> {
        let img = self.prepare(encoded)?;
        Ok(softmax(&self.net.logits(&img.input)?))
    }

    pub fn explain(
        &self,
        encoded: &[u8],
        target: usize,
        method: &str,
        iterations: usize,
    ) -> Result<Explanation> {
        self.net.select_target(target)?;
        let method: Method = method.parse()?;
        let cfg = config(iterations)?;
        let img = self.prepare(encoded)?;
        let (map, loss_trace) = match method {
            Method::Dmbp => {
                let (map, outcome) = dmbp_attribution(&self.net, &img.input, target, &cfg.dmbp)?;
                (map, outcome.loss_trace)
            }
            m => (
                attribute(&self.net, &img.input, target, m, &cfg)?,
                Vec::new(),
            ),
        };
        let heatmap = heatmap_png(&map, None)?;
        let overlay = heatmap_png(
            &map,
            Some(Overlay {
                image: &img.raw,
                alpha: 0.5,
            }),
        )?;
        Ok(Explanation {
            map,
            heatmap,
            overlay,
            loss_trace,
        })
    }

    /// Insertion curve of a map computed by `explain` on the same image.
    pub fn insertion(
        &self,
        encoded: &[u8],
        map: &AttributionMap,
        target: usize,
        steps: usize,
    ) -> Result<InsertionCurve> {
        let img = self.prepare(encoded)?;
        let cfg = MetricConfig {
            steps,
            ..Default::default()
        };
        cfg.validate()?;
        Metric::Im.evaluate(&self.net, &img.raw, map, target, &[], &cfg)
    }
}

fn config(iterations: usize) -> Result<MethodConfig> {
    let cfg = MethodConfig {
        dmbp: DmbpConfig {
            iterations,
            ..Default::default()
        },
        ..Default::default()
    };
    cfg.dmbp.validate()?;
    Ok(cfg)
}
