//! Nearest-neighbour template matcher.
//!
//! A deliberately trivial recognizer over a closed vocabulary, used to compare
//! preprocessing variants without training a model. Boxes are resized to a
//! fixed canvas, standardized to zero mean and unit variance, and matched by
//! sum of squared differences.

use crate::imagecore::{resize_bilinear, GrayImage};

pub struct TemplateRecognizer {
    width: usize,
    height: usize,
    templates: Vec<(String, Vec<f32>)>,
}

impl TemplateRecognizer {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0);
        Self {
            width,
            height,
            templates: Vec::new(),
        }
    }

    fn features(&self, img: &GrayImage) -> Vec<f32> {
        let canvas = resize_bilinear(img, self.width, self.height).expect("non-zero canvas");
        let n = canvas.data().len() as f32;
        let mean = canvas.data().iter().map(|&v| v as f32).sum::<f32>() / n;
        let var = canvas.data().iter().map(|&v| (v as f32 - mean).powi(2)).sum::<f32>() / n;
        let inv = if var > 0.0 { var.sqrt().recip() } else { 0.0 };
        canvas.data().iter().map(|&v| (v as f32 - mean) * inv).collect()
    }

    pub fn add_template(&mut self, label: impl Into<String>, img: &GrayImage) {
        let f = self.features(img);
        self.templates.push((label.into(), f));
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Label of the closest template; ties go to the earliest one added.
    pub fn recognize(&self, img: &GrayImage) -> Option<&str> {
        let f = self.features(img);
        self.templates
            .iter()
            .map(|(label, t)| {
                let d: f32 = t.iter().zip(&f).map(|(a, b)| (a - b) * (a - b)).sum();
                (label, d)
            })
            .fold(None, |best: Option<(&String, f32)>, (l, d)| match best {
                Some((_, bd)) if bd <= d => best,
                _ => Some((l, d)),
            })
            .map(|(l, _)| l.as_str())
    }
}
