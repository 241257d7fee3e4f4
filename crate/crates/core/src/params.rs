//! Flat packing of the tunable quantities of a [`CalibrationModel`].
//!
//! Order: `θ | η_f | ℓ_f | η_δ | ℓ_δ | β_f | β_δ`, optionally followed by `σ`.

use crate::data::Interval;
use crate::model::CalibrationModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Theta,
    AmplitudeF,
    LengthScaleF,
    AmplitudeDelta,
    LengthScaleDelta,
    CoefficientF,
    CoefficientDelta,
    Sigma,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub kind: ParamKind,
    /// Position within its group.
    pub index: usize,
    pub bound: Interval,
    /// Structurally positive (amplitudes, length scales, noise scale).
    pub positive: bool,
}

impl ParamEntry {
    pub fn is_free(&self) -> bool {
        !self.bound.is_fixed()
    }

    /// Optimize on the log scale when the parameter is positive and its box
    /// stays away from zero.
    pub fn log_scaled(&self) -> bool {
        self.positive && self.bound.lower > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    entries: Vec<ParamEntry>,
}

impl ParamLayout {
    pub fn new(model: &CalibrationModel) -> Self {
        let b = &model.bounds;
        let mut entries = Vec::new();
        let mut push = |name: String, kind, index, bound: Interval, positive| {
            entries.push(ParamEntry { name, kind, index, bound, positive })
        };
        for (i, iv) in b.theta.iter().enumerate() {
            push(format!("theta[{i}]"), ParamKind::Theta, i, *iv, false);
        }
        push("eta_f".into(), ParamKind::AmplitudeF, 0, b.kernel_f_amplitude, true);
        for (i, iv) in b.kernel_f_length_scales.iter().enumerate() {
            push(format!("ell_f[{i}]"), ParamKind::LengthScaleF, i, *iv, true);
        }
        push("eta_delta".into(), ParamKind::AmplitudeDelta, 0, b.kernel_delta_amplitude, true);
        for (i, iv) in b.kernel_delta_length_scales.iter().enumerate() {
            push(format!("ell_delta[{i}]"), ParamKind::LengthScaleDelta, i, *iv, true);
        }
        for (i, iv) in b.mean_f_coefficients.iter().enumerate() {
            push(format!("beta_f[{i}]"), ParamKind::CoefficientF, i, *iv, false);
        }
        for (i, iv) in b.mean_delta_coefficients.iter().enumerate() {
            push(format!("beta_delta[{i}]"), ParamKind::CoefficientDelta, i, *iv, false);
        }
        Self { entries }
    }

    /// Layout with the observation noise scale appended.
    pub fn with_sigma(model: &CalibrationModel, bound: Interval) -> Self {
        let mut layout = Self::new(model);
        layout.entries.push(ParamEntry {
            name: "sigma".into(),
            kind: ParamKind::Sigma,
            index: 0,
            bound,
            positive: true,
        });
        layout
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.entries[i].is_free()).collect()
    }

    pub fn extract(&self, model: &CalibrationModel) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| match e.kind {
                ParamKind::Theta => model.theta[e.index],
                ParamKind::AmplitudeF => model.kernel_f.amplitude,
                ParamKind::LengthScaleF => model.kernel_f.length_scales[e.index],
                ParamKind::AmplitudeDelta => model.kernel_delta.amplitude,
                ParamKind::LengthScaleDelta => model.kernel_delta.length_scales[e.index],
                ParamKind::CoefficientF => model.mean_f.coefficients[e.index],
                ParamKind::CoefficientDelta => model.mean_delta.coefficients[e.index],
                ParamKind::Sigma => model.sigma,
            })
            .collect()
    }

    /// Copy of `model` with every entry set from `values` (no validation).
    pub fn apply(&self, model: &CalibrationModel, values: &[f64]) -> CalibrationModel {
        assert_eq!(values.len(), self.len(), "parameter vector length");
        let mut m = model.clone();
        for (e, &v) in self.entries.iter().zip(values) {
            match e.kind {
                ParamKind::Theta => m.theta[e.index] = v,
                ParamKind::AmplitudeF => m.kernel_f.amplitude = v,
                ParamKind::LengthScaleF => m.kernel_f.length_scales[e.index] = v,
                ParamKind::AmplitudeDelta => m.kernel_delta.amplitude = v,
                ParamKind::LengthScaleDelta => m.kernel_delta.length_scales[e.index] = v,
                ParamKind::CoefficientF => m.mean_f.coefficients[e.index] = v,
                ParamKind::CoefficientDelta => m.mean_delta.coefficients[e.index] = v,
                ParamKind::Sigma => m.sigma = v,
            }
        }
        m
    }
}
