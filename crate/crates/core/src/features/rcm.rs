use nalgebra::{DMatrix, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::GrayImage;
use crate::spd::SpdMatrix;

/// Relative ridge added to every region covariance.
pub const COV_REGULARIZER: f64 = 1e-5;

const CHANNELS: usize = 8;
type Feature = SVector<f64, CHANNELS>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordScaling {
    /// `x / (width - 1)`, `y / (height - 1)`.
    #[default]
    Normalized,
    /// Pixel indices.
    Raw,
}

/// Per-pixel vectors `[x, y, I, |Ix|, |Iy|, |Ixx|, |Iyy|, θ]`, row-major.
#[derive(Clone, Debug)]
pub struct FeatureField {
    width: usize,
    height: usize,
    features: Vec<Feature>,
}

impl FeatureField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn at(&self, x: usize, y: usize) -> [f64; CHANNELS] {
        self.features[y * self.width + x].into()
    }
}

pub fn feature_field(img: &GrayImage, coords: CoordScaling) -> Result<FeatureField> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(Error::InvalidArgument(format!(
            "image {w}x{h} is too small for the derivative stencils"
        )));
    }
    // replicate padding
    let px = |x: isize, y: isize| {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        img.at(xc, yc)
    };
    let (sx, sy) = match coords {
        CoordScaling::Normalized => (1.0 / (w - 1) as f64, 1.0 / (h - 1) as f64),
        CoordScaling::Raw => (1.0, 1.0),
    };
    let mut features = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let c = px(x, y);
            let ix = 0.5 * (px(x + 1, y) - px(x - 1, y));
            let iy = 0.5 * (px(x, y + 1) - px(x, y - 1));
            let ixx = px(x + 1, y) - 2.0 * c + px(x - 1, y);
            let iyy = px(x, y + 1) - 2.0 * c + px(x, y - 1);
            let theta = iy.abs().atan2(ix.abs());
            features.push(Feature::from([
                x as f64 * sx,
                y as f64 * sy,
                c,
                ix.abs(),
                iy.abs(),
                ixx.abs(),
                iyy.abs(),
                theta,
            ]));
        }
    }
    Ok(FeatureField {
        width: w,
        height: h,
        features,
    })
}

/// Axis-aligned pixel rectangle `[x0, x0 + width) x [y0, y0 + height)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Region {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Region {
    pub fn whole(ff: &FeatureField) -> Self {
        Region {
            x0: 0,
            y0: 0,
            width: ff.width,
            height: ff.height,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RegionCovariance {
    pub matrix: SpdMatrix,
    /// Every feature vector in the region was identical; the result is the
    /// pure ridge.
    pub constant_region: bool,
}

/// Sample covariance (divisor `n - 1`) of the feature vectors in `region`,
/// plus `COV_REGULARIZER * tr(C) / 8 * I`.
pub fn region_covariance(ff: &FeatureField, region: Region) -> Result<RegionCovariance> {
    let n = region.width * region.height;
    if n < 9 {
        return Err(Error::InvalidArgument(format!(
            "region of {n} pixels is too small (need at least 9)"
        )));
    }
    if region.x0 + region.width > ff.width || region.y0 + region.height > ff.height {
        return Err(Error::InvalidArgument("region exceeds the image".into()));
    }
    let pixels = || {
        (region.y0..region.y0 + region.height).flat_map(move |y| {
            (region.x0..region.x0 + region.width).map(move |x| &ff.features[y * ff.width + x])
        })
    };
    let first = pixels().next().expect("region is nonempty");
    let constant_region = pixels().all(|f| f == first);
    let mut cov = SMatrix::<f64, CHANNELS, CHANNELS>::zeros();
    if !constant_region {
        let mean = pixels().fold(Feature::zeros(), |acc, f| acc + f) / n as f64;
        for f in pixels() {
            let c = f - mean;
            cov += c * c.transpose();
        }
        cov /= (n - 1) as f64;
    }
    let tr = cov.trace();
    let ridge = if tr == 0.0 {
        COV_REGULARIZER
    } else {
        COV_REGULARIZER * tr / CHANNELS as f64
    };
    let mut out = DMatrix::from_fn(CHANNELS, CHANNELS, |i, j| cov[(i, j)]);
    for i in 0..CHANNELS {
        out[(i, i)] += ridge;
    }
    Ok(RegionCovariance {
        matrix: SpdMatrix::from_product(&out)?,
        constant_region,
    })
}

/// `blockdiag(C_full, C_left, C_right)`, 24x24. The left half holds columns
/// `0..width/2`.
pub fn mnist_rcm(img: &GrayImage, coords: CoordScaling) -> Result<SpdMatrix> {
    let ff = feature_field(img, coords)?;
    let half = ff.width / 2;
    let regions = [
        Region::whole(&ff),
        Region {
            x0: 0,
            y0: 0,
            width: half,
            height: ff.height,
        },
        Region {
            x0: half,
            y0: 0,
            width: ff.width - half,
            height: ff.height,
        },
    ];
    let mut out = DMatrix::zeros(3 * CHANNELS, 3 * CHANNELS);
    for (b, r) in regions.iter().enumerate() {
        let c = region_covariance(&ff, *r)?;
        out.view_mut((b * CHANNELS, b * CHANNELS), (CHANNELS, CHANNELS))
            .copy_from(c.matrix.matrix());
    }
    SpdMatrix::new(out)
}
