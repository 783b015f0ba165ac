use crate::error::{Error, Result};
use crate::rerank::remote::{ClientConfig, HttpClient};
use crate::rerank::wire::{ExtractResponse, PROTOCOL_VERSION};
use crate::types::TokenGrid;

use super::Image;

/// Maps an image to its visual-token grid.
pub trait Extractor: Send + Sync {
    fn id(&self) -> String;
    fn extract(&self, img: &Image) -> Result<TokenGrid>;
}

/// Dimension of [`PatchExtractor`] tokens: mean RGB of the 2x2 sub-blocks.
pub const PATCH_TOKEN_DIM: usize = 12;

/// Deterministic stand-in for a vision encoder. The image is cut into
/// `patch`-pixel squares (the last row and column may be partial); each
/// token holds the mean colour of its four sub-blocks scaled to [-1, 1].
#[derive(Debug, Clone, Copy)]
pub struct PatchExtractor {
    patch: u32,
}

impl PatchExtractor {
    pub fn new(patch: u32) -> Self {
        Self {
            patch: patch.max(1),
        }
    }

    pub fn patch(&self) -> u32 {
        self.patch
    }
}

impl Extractor for PatchExtractor {
    fn id(&self) -> String {
        format!("patch{}", self.patch)
    }

    fn extract(&self, img: &Image) -> Result<TokenGrid> {
        let p = self.patch;
        let rows = img.height().div_ceil(p);
        let cols = img.width().div_ceil(p);
        if rows > u16::MAX as u32 || cols > u16::MAX as u32 {
            return Err(Error::InvalidGrid(format!(
                "{rows}x{cols} patch grid too large"
            )));
        }
        let mut tokens = Vec::with_capacity((rows * cols) as usize * PATCH_TOKEN_DIM);
        for r in 0..rows {
            for c in 0..cols {
                let x0 = c * p;
                let y0 = r * p;
                let x1 = (x0 + p).min(img.width());
                let y1 = (y0 + p).min(img.height());
                let xm = x0 + p.div_ceil(2);
                let ym = y0 + p.div_ceil(2);
                for (ys, ye) in [(y0, ym.min(y1)), (ym.min(y1), y1)] {
                    for (xs, xe) in [(x0, xm.min(x1)), (xm.min(x1), x1)] {
                        let mut sum = [0f64; 3];
                        let mut n = 0u32;
                        for y in ys..ye {
                            for x in xs..xe {
                                let px = img.get(x, y);
                                for k in 0..3 {
                                    sum[k] += px[k] as f64;
                                }
                                n += 1;
                            }
                        }
                        for s in sum {
                            tokens.push(if n == 0 {
                                0.0
                            } else {
                                (s / n as f64 / 127.5 - 1.0) as f32
                            });
                        }
                    }
                }
            }
        }
        TokenGrid::dense(tokens, PATCH_TOKEN_DIM, rows as u16, cols as u16)
    }
}

/// Extraction through the scoring service's `/v1/extract` endpoint.
#[derive(Debug)]
pub struct RemoteExtractor {
    http: HttpClient,
    resolution: Option<u32>,
    endpoint: String,
}

impl RemoteExtractor {
    pub fn new(cfg: &ClientConfig, resolution: Option<u32>) -> Self {
        Self {
            http: HttpClient::new(cfg),
            resolution,
            endpoint: cfg.endpoint.clone(),
        }
    }

    /// Token grid plus the optional global descriptor returned by the service.
    pub fn extract_full(&self, img: &Image) -> Result<(TokenGrid, Option<Vec<f32>>)> {
        let path = match self.resolution {
            Some(r) => format!("/v1/extract?resolution={r}"),
            None => "/v1/extract".to_string(),
        };
        let resp: ExtractResponse = self
            .http
            .post_json(&path, "image/png", &img.encode_png()?)?;
        if resp.protocol != PROTOCOL_VERSION {
            return Err(Error::ProtocolMismatch(format!(
                "extract response protocol {}",
                resp.protocol
            )));
        }
        let grid = resp.grid.to_grid(resp.d)?;
        Ok((grid, resp.global))
    }
}

impl Extractor for RemoteExtractor {
    fn id(&self) -> String {
        format!("remote:{}", self.endpoint)
    }

    fn extract(&self, img: &Image) -> Result<TokenGrid> {
        self.extract_full(img).map(|(g, _)| g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shape_and_values() {
        let img = Image::from_fn(
            20,
            9,
            |x, _| if x < 10 { [255, 255, 255] } else { [0, 0, 0] },
        )
        .unwrap();
        let g = PatchExtractor::new(8).extract(&img).unwrap();
        assert_eq!(
            (g.grid_rows(), g.grid_cols(), g.dim()),
            (2, 3, PATCH_TOKEN_DIM)
        );
        assert!(g.token(0).iter().all(|&v| v == 1.0));
        // last column covers x in 16..20: black left half, empty right half
        assert!(g.token(2)[..3].iter().all(|&v| v == -1.0));
        assert!(g.token(2)[3..6].iter().all(|&v| v == 0.0));
        // bottom row is one pixel high: the lower sub-blocks are empty
        assert!(g.token(3)[6..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic() {
        let img = Image::from_fn(17, 13, |x, y| [(x * 15) as u8, (y * 19) as u8, 3]).unwrap();
        let e = PatchExtractor::new(4);
        assert_eq!(e.extract(&img).unwrap(), e.extract(&img).unwrap());
    }
}
