use crate::error::{Error, Result};

pub const MAX_RANK: usize = 5;

/// Dense rank-1..=5 array of `f32` in row-major order.
///
/// The canonical axis order for rank-5 tensors is `[N, C, T, H, W]`
/// (batch, channels, frames, height, width); element `(n, c, t, h, w)`
/// lives at offset `((((n*C + c)*T + t)*H + h)*W + w)`. Lower-rank tensors
/// document their axis meaning at each call site.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_RANK {
            return Err(Error::Dim(format!(
                "rank must be 1..={MAX_RANK}, got {}",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::Dim(format!("all extents must be >= 1, got {dims:?}")));
        }
        let numel: usize = dims.iter().product();
        if numel != data.len() {
            return Err(Error::Dim(format!(
                "dims {dims:?} imply {numel} elements but buffer holds {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let numel: usize = dims.iter().product();
        Tensor::new(dims.to_vec(), vec![0.0; numel])
    }

    pub fn filled(dims: &[usize], value: f32) -> Result<Self> {
        let numel: usize = dims.iter().product();
        Tensor::new(dims.to_vec(), vec![value; numel])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Reinterpret the buffer under new dims with the same element count.
    pub fn reshape(&self, dims: &[usize]) -> Result<Tensor> {
        Tensor::new(dims.to_vec(), self.data.clone())
    }

    pub fn dims2(&self) -> Result<(usize, usize)> {
        match *self.dims {
            [a, b] => Ok((a, b)),
            _ => Err(Error::Dim(format!("expected rank 2, got {:?}", self.dims))),
        }
    }

    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match *self.dims {
            [a, b, c, d] => Ok((a, b, c, d)),
            _ => Err(Error::Dim(format!("expected rank 4, got {:?}", self.dims))),
        }
    }

    pub fn dims5(&self) -> Result<(usize, usize, usize, usize, usize)> {
        match *self.dims {
            [a, b, c, d, e] => Ok((a, b, c, d, e)),
            _ => Err(Error::Dim(format!("expected rank 5, got {:?}", self.dims))),
        }
    }

    /// Offset of `(n, c, t, h, w)` in a rank-5 tensor.
    #[inline]
    pub fn offset5(&self, n: usize, c: usize, t: usize, h: usize, w: usize) -> usize {
        let [_, cd, td, hd, wd] = *self.dims else {
            panic!("offset5 on rank-{} tensor", self.dims.len())
        };
        ((((n * cd) + c) * td + t) * hd + h) * wd + w
    }

    #[inline]
    pub fn at5(&self, n: usize, c: usize, t: usize, h: usize, w: usize) -> f32 {
        self.data[self.offset5(n, c, t, h, w)]
    }

    #[inline]
    pub fn offset4(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        let [_, cd, hd, wd] = *self.dims else {
            panic!("offset4 on rank-{} tensor", self.dims.len())
        };
        (((n * cd) + c) * hd + h) * wd + w
    }

    #[inline]
    pub fn at4(&self, n: usize, c: usize, h: usize, w: usize) -> f32 {
        self.data[self.offset4(n, c, h, w)]
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        assert_eq!(self.dims, other.dims, "max_abs_diff on mismatched dims");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

/// Fold the temporal axis of `[N, C, T, H, W]` into the batch axis,
/// producing `[N*T, C, H, W]` with row index `n*T + t`.
///
/// 2D kernels then treat every frame as an independent batch element.
pub fn fold_time(x: &Tensor) -> Result<Tensor> {
    let (n, c, t, h, w) = x.dims5()?;
    let plane = h * w;
    let mut out = vec![0.0f32; x.len()];
    let src = x.data();
    for ni in 0..n {
        for ci in 0..c {
            for ti in 0..t {
                let s = (((ni * c) + ci) * t + ti) * plane;
                let d = (((ni * t + ti) * c) + ci) * plane;
                out[d..d + plane].copy_from_slice(&src[s..s + plane]);
            }
        }
    }
    Tensor::new(vec![n * t, c, h, w], out)
}

/// Copy frame `t` of `[N, C, T, H, W]` out as `[N, C, 1, H, W]`.
pub fn frame_slice(x: &Tensor, t: usize) -> Result<Tensor> {
    let (n, c, td, h, w) = x.dims5()?;
    if t >= td {
        return Err(Error::Arg(format!("frame {t} out of {td}")));
    }
    let plane = h * w;
    let mut data = Vec::with_capacity(n * c * plane);
    for ni in 0..n {
        for ci in 0..c {
            let base = ((ni * c + ci) * td + t) * plane;
            data.extend_from_slice(&x.data()[base..base + plane]);
        }
    }
    Tensor::new(vec![n, c, 1, h, w], data)
}

/// Inverse of [`fold_time`]: `[N*T, C, H, W]` back to `[N, C, T, H, W]`.
pub fn unfold_time(x: &Tensor, frames: usize) -> Result<Tensor> {
    let (nt, c, h, w) = x.dims4()?;
    if frames == 0 || nt % frames != 0 {
        return Err(Error::Dim(format!(
            "cannot unfold {nt} rows into {frames} frames"
        )));
    }
    let n = nt / frames;
    let plane = h * w;
    let mut out = vec![0.0f32; x.len()];
    let src = x.data();
    for ni in 0..n {
        for ci in 0..c {
            for ti in 0..frames {
                let s = (((ni * frames + ti) * c) + ci) * plane;
                let d = (((ni * c) + ci) * frames + ti) * plane;
                out[d..d + plane].copy_from_slice(&src[s..s + plane]);
            }
        }
    }
    Tensor::new(vec![n, c, frames, h, w], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_extent() {
        assert!(Tensor::zeros(&[2, 0, 3]).is_err());
    }

    #[test]
    fn rejects_rank_out_of_range() {
        assert!(Tensor::new(vec![], vec![]).is_err());
        assert!(Tensor::zeros(&[1, 1, 1, 1, 1, 1]).is_err());
    }

    #[test]
    fn rejects_length_mismatch() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn row_major_offset() {
        let t = Tensor::zeros(&[2, 3, 4, 5, 6]).unwrap();
        // ((((n*C + c)*T + t)*H + h)*W + w)
        assert_eq!(t.offset5(1, 2, 3, 4, 5), ((((3 + 2) * 4 + 3) * 5 + 4) * 6 + 5));
        assert_eq!(t.offset5(0, 0, 0, 0, 0), 0);
    }

    #[test]
    fn fold_unfold_roundtrip() {
        let dims = [2usize, 3, 4, 2, 2];
        let numel: usize = dims.iter().product();
        let x = Tensor::new(dims.to_vec(), (0..numel).map(|i| i as f32).collect()).unwrap();
        let folded = fold_time(&x).unwrap();
        assert_eq!(folded.dims(), &[8, 3, 2, 2]);
        // row n*T + t = 1*4 + 2, channel c equals x[n, c, t]
        assert_eq!(folded.at4(6, 1, 0, 1), x.at5(1, 1, 2, 0, 1));
        let back = unfold_time(&folded, 4).unwrap();
        assert_eq!(back, x);
    }
}
