use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::types::{FeatureDescriptor, FeatureKind, AGE_ID, GENDER_ID, LEARNING_MODE_ID};
use crate::error::{Error, Result};

/// Where an encoded context position comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedSlot {
    /// Index into the schema's feature list.
    pub feature: usize,
    /// Category label for one-hot positions.
    pub category: Option<String>,
}

/// Ordered feature list with the derived encoded layout.
///
/// Numeric features occupy the first encoded positions in schema order,
/// followed by one one-hot block per categorical feature, also in schema
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FeatureDescriptor>", into = "Vec<FeatureDescriptor>")]
pub struct Schema {
    features: Vec<FeatureDescriptor>,
    layout: Vec<EncodedSlot>,
}

impl Schema {
    pub fn new(features: Vec<FeatureDescriptor>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for f in &features {
            if !seen.insert(f.id.as_str()) {
                return Err(Error::Schema(format!("duplicate feature id `{}`", f.id)));
            }
            if f.kind == FeatureKind::Categorical && f.categories.len() < 2 {
                return Err(Error::Schema(format!(
                    "categorical feature `{}` needs at least 2 categories",
                    f.id
                )));
            }
        }
        for required in [GENDER_ID, LEARNING_MODE_ID] {
            match features.iter().find(|f| f.id == required) {
                Some(f) if f.kind == FeatureKind::Categorical => {}
                _ => {
                    return Err(Error::Schema(format!(
                        "schema must declare categorical feature `{required}`"
                    )))
                }
            }
        }
        if !features
            .iter()
            .any(|f| f.id == AGE_ID && f.kind == FeatureKind::Numeric)
        {
            return Err(Error::Schema(format!(
                "schema must declare numeric feature `{AGE_ID}`"
            )));
        }

        let mut layout = Vec::new();
        for (i, f) in features.iter().enumerate() {
            if f.is_numeric() {
                layout.push(EncodedSlot {
                    feature: i,
                    category: None,
                });
            }
        }
        for (i, f) in features.iter().enumerate() {
            if !f.is_numeric() {
                for c in &f.categories {
                    layout.push(EncodedSlot {
                        feature: i,
                        category: Some(c.clone()),
                    });
                }
            }
        }
        Ok(Schema { features, layout })
    }

    pub fn features(&self) -> &[FeatureDescriptor] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.features.iter().position(|f| f.id == id)
    }

    pub fn get(&self, id: &str) -> Result<&FeatureDescriptor> {
        self.index_of(id)
            .map(|i| &self.features[i])
            .ok_or_else(|| Error::Schema(format!("unknown feature id `{id}`")))
    }

    pub fn numeric(&self) -> impl Iterator<Item = &FeatureDescriptor> {
        self.features.iter().filter(|f| f.is_numeric())
    }

    pub fn categorical(&self) -> impl Iterator<Item = &FeatureDescriptor> {
        self.features.iter().filter(|f| !f.is_numeric())
    }

    /// Width of the encoded context vector.
    pub fn encoded_len(&self) -> usize {
        self.layout.len()
    }

    pub fn layout(&self) -> &[EncodedSlot] {
        &self.layout
    }

    /// Encoded positions belonging to raw feature `feature` (schema index).
    pub fn positions_of(&self, feature: usize) -> Vec<usize> {
        self.layout
            .iter()
            .enumerate()
            .filter(|(_, s)| s.feature == feature)
            .map(|(p, _)| p)
            .collect()
    }
}

impl TryFrom<Vec<FeatureDescriptor>> for Schema {
    type Error = Error;

    fn try_from(features: Vec<FeatureDescriptor>) -> Result<Self> {
        Schema::new(features)
    }
}

impl From<Schema> for Vec<FeatureDescriptor> {
    fn from(schema: Schema) -> Self {
        schema.features
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::synth::default_schema;

    #[test]
    fn default_schema_encodes_to_fifty() {
        let schema = default_schema();
        assert_eq!(schema.len(), 47);
        assert_eq!(schema.numeric().count(), 45);
        assert_eq!(schema.encoded_len(), 50);
        let g = schema.index_of(GENDER_ID).unwrap();
        assert_eq!(schema.positions_of(g), vec![45, 46]);
        let m = schema.index_of(LEARNING_MODE_ID).unwrap();
        assert_eq!(schema.positions_of(m), vec![47, 48, 49]);
    }

    #[test]
    fn rejects_duplicates_and_thin_categoricals() {
        let mut features = default_schema().features().to_vec();
        features.push(features[0].clone());
        assert!(matches!(Schema::new(features), Err(Error::Schema(_))));

        let mut features = default_schema().features().to_vec();
        let g = features.iter_mut().find(|f| f.id == GENDER_ID).unwrap();
        g.categories.truncate(1);
        assert!(matches!(Schema::new(features), Err(Error::Schema(_))));
    }
}
