use crate::error::{Error, Result};
use crate::model::{Bounds, Camera, ImageBuffer};

/// One observed image with its camera.
#[derive(Clone, Debug, PartialEq)]
pub struct PosedView {
    /// Path of the image relative to the dataset root, without extension.
    pub name: String,
    pub camera: Camera,
    pub image: ImageBuffer,
}

/// A set of posed observations of one object.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub views: Vec<PosedView>,
    pub background: [f64; 3],
    pub bounds: Bounds,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        if self.views.is_empty() {
            return Err(Error::Config("dataset has no views".into()));
        }
        for v in &self.views {
            v.camera.validate()?;
            if v.image.width != v.camera.width || v.image.height != v.camera.height {
                return Err(Error::Shape(format!(
                    "view {}: image is {}x{} but camera expects {}x{}",
                    v.name, v.image.width, v.image.height, v.camera.width, v.camera.height
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }
}
