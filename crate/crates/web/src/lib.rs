//! Browser bindings for a single-page attribution demo. The page picks an
//! image, explains one class with a chosen method and plots the dmbp loss
//! trace and the insertion curve of the map.

pub mod session;

use dmbp::imaging::AttributionMap;
use wasm_bindgen::prelude::*;

use session::Session;

fn js(e: dmbp::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    session: Session,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Result<Demo, JsError> {
        Ok(Demo {
            session: Session::toy().map_err(js)?,
        })
    }

    #[wasm_bindgen(getter)]
    pub fn model_id(&self) -> String {
        self.session.network().model_id().to_string()
    }

    #[wasm_bindgen(getter)]
    pub fn class_count(&self) -> usize {
        self.session.network().class_count()
    }

    #[wasm_bindgen(getter)]
    pub fn sample_count(&self) -> usize {
        self.session.sample_count()
    }

    pub fn sample_png(&self, index: usize) -> Option<Vec<u8>> {
        self.session.sample_png(index).map(<[u8]>::to_vec)
    }

    pub fn sample_target(&self, index: usize) -> Option<usize> {
        self.session.sample_target(index)
    }

    /// Softmax of the logits for an encoded image.
    pub fn probabilities(&self, image: &[u8]) -> Result<Vec<f64>, JsError> {
        self.session.probabilities(image).map_err(js)
    }

    /// Attribution map of `target` by `method` (dmbp, grad, ig or sg).
    /// `iterations` only affects dmbp.
    pub fn explain(
        &self,
        image: &[u8],
        target: usize,
        method: &str,
        iterations: usize,
    ) -> Result<Explanation, JsError> {
        let e = self
            .session
            .explain(image, target, method, iterations)
            .map_err(js)?;
        Ok(Explanation {
            target,
            map: e.map,
            heatmap: e.heatmap,
            overlay: e.overlay,
            losses: e.loss_trace.iter().map(|r| r.loss).collect(),
            y_pos: e.loss_trace.iter().map(|r| r.y_pos).collect(),
            y_neg: e.loss_trace.iter().map(|r| r.y_neg).collect(),
            y_nui: e.loss_trace.iter().map(|r| r.y_nui).collect(),
        })
    }

    /// Insertion curve of an explanation on the image it was computed for.
    pub fn insertion(
        &self,
        image: &[u8],
        explanation: &Explanation,
        steps: usize,
    ) -> Result<Curve, JsError> {
        let c = self
            .session
            .insertion(image, &explanation.map, explanation.target, steps)
            .map_err(js)?;
        Ok(Curve {
            fractions: c.fractions,
            probabilities: c.probabilities,
            auc: c.auc,
        })
    }
}

#[wasm_bindgen]
pub struct Explanation {
    target: usize,
    map: AttributionMap,
    heatmap: Vec<u8>,
    overlay: Vec<u8>,
    losses: Vec<f64>,
    y_pos: Vec<f64>,
    y_neg: Vec<f64>,
    y_nui: Vec<f64>,
}

#[wasm_bindgen]
impl Explanation {
    /// Diverging heatmap as PNG bytes.
    #[wasm_bindgen(getter)]
    pub fn heatmap(&self) -> Vec<u8> {
        self.heatmap.clone()
    }

    /// Heatmap blended over the input, as PNG bytes.
    #[wasm_bindgen(getter)]
    pub fn overlay(&self) -> Vec<u8> {
        self.overlay.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.map.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.map.height
    }

    /// Loss per iteration; empty for methods other than dmbp.
    #[wasm_bindgen(getter)]
    pub fn losses(&self) -> Vec<f64> {
        self.losses.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn y_pos(&self) -> Vec<f64> {
        self.y_pos.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn y_neg(&self) -> Vec<f64> {
        self.y_neg.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn y_nui(&self) -> Vec<f64> {
        self.y_nui.clone()
    }
}

#[wasm_bindgen]
pub struct Curve {
    fractions: Vec<f64>,
    probabilities: Vec<f64>,
    auc: f64,
}

#[wasm_bindgen]
impl Curve {
    #[wasm_bindgen(getter)]
    pub fn fractions(&self) -> Vec<f64> {
        self.fractions.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn probabilities(&self) -> Vec<f64> {
        self.probabilities.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn auc(&self) -> f64 {
        self.auc
    }
}
