use super::{GradError, Tensor};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamEntry {
    pub fn size(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Flattened model parameters with a per-parameter layout table.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: Vec<ParamEntry>,
    pub arch_id: String,
}

impl ParamVector {
    /// Zero-filled vector with contiguous offsets for `(name, shape)` pairs.
    pub fn zeros(arch_id: impl Into<String>, params: &[(&str, Vec<usize>)]) -> Self {
        let mut offset = 0;
        let layout = params
            .iter()
            .map(|(name, shape)| {
                let e = ParamEntry {
                    name: (*name).to_string(),
                    shape: shape.clone(),
                    offset,
                };
                offset += e.size();
                e
            })
            .collect();
        Self {
            values: vec![0.0; offset],
            layout,
            arch_id: arch_id.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<(), GradError> {
        let mut expected = 0;
        for e in &self.layout {
            if e.offset != expected {
                return Err(GradError::Layout(format!(
                    "parameter {} starts at {} but previous parameters end at {expected}",
                    e.name, e.offset
                )));
            }
            if e.shape.contains(&0) {
                return Err(GradError::Layout(format!("parameter {} has an empty dimension", e.name)));
            }
            expected += e.size();
        }
        if expected != self.values.len() {
            return Err(GradError::Layout(format!(
                "layout covers {expected} values, vector holds {}",
                self.values.len()
            )));
        }
        Ok(())
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.layout.iter().find(|e| e.name == name)
    }

    pub fn slice(&self, idx: usize) -> &[f64] {
        let e = &self.layout[idx];
        &self.values[e.offset..e.offset + e.size()]
    }

    pub fn slice_mut(&mut self, idx: usize) -> &mut [f64] {
        let (offset, size) = {
            let e = &self.layout[idx];
            (e.offset, e.size())
        };
        &mut self.values[offset..offset + size]
    }

    pub fn tensor(&self, idx: usize) -> Tensor {
        Tensor::new(self.layout[idx].shape.clone(), self.slice(idx).to_vec()).expect("layout validated")
    }

    /// Flatten per-parameter tensors (in layout order) into one vector.
    pub fn flatten(&self, parts: &[Tensor]) -> Result<Vec<f64>, GradError> {
        if parts.len() != self.layout.len() {
            return Err(GradError::Layout(format!(
                "expected {} parameter tensors, got {}",
                self.layout.len(),
                parts.len()
            )));
        }
        let mut out = Vec::with_capacity(self.len());
        for (e, t) in self.layout.iter().zip(parts) {
            if t.len() != e.size() {
                return Err(GradError::Layout(format!("tensor for {} has {} values", e.name, t.len())));
            }
            out.extend_from_slice(t.data());
        }
        Ok(out)
    }

    /// Split a flat vector aligned with this layout back into tensors.
    pub fn unflatten(&self, flat: &[f64]) -> Result<Vec<Tensor>, GradError> {
        if flat.len() != self.len() {
            return Err(GradError::Layout(format!(
                "flat vector has {} values, layout needs {}",
                flat.len(),
                self.len()
            )));
        }
        self.layout
            .iter()
            .map(|e| Tensor::new(e.shape.clone(), flat[e.offset..e.offset + e.size()].to_vec()))
            .collect()
    }
}
