//! Software reference implementations. Every simulated datapath is checked
//! against these bit-for-bit. `conv_reference` is a direct sliding window and
//! shares no code with the Im2Col route.

use crate::error::{Error, Result};
use crate::model::quant::{finish_value, AccWidth};
use crate::model::tensor::{shared_index, FeatureMap, FilterSet, Im2ColMatrix, OutputMatrix, WeightMatrix};
use crate::model::{LayerKind, LayerSpec};

fn require_input(x: &FeatureMap, layer: &LayerSpec) -> Result<()> {
    layer.validate()?;
    if x.dims() != layer.input_dims() {
        return Err(Error::DimensionMismatch(format!(
            "input is {:?}, layer expects {:?}",
            x.dims(),
            layer.input_dims()
        )));
    }
    Ok(())
}

/// Each filter becomes one row in canonical shared-dimension order.
pub fn flatten_filters(f: &FilterSet) -> WeightMatrix {
    let (filters, channels, kh, kw) = f.dims();
    let cols = channels * kh * kw;
    let mut w = WeightMatrix::zeros(filters, cols);
    for k in 0..filters {
        for c in 0..channels {
            for r in 0..kh {
                for s in 0..kw {
                    w.set(k, shared_index(c, r, s, kh, kw), f.get(k, c, r, s));
                }
            }
        }
    }
    w
}

pub fn im2col_reference(x: &FeatureMap, layer: &LayerSpec) -> Result<Im2ColMatrix> {
    if layer.kind == LayerKind::FullyConnected {
        return Err(Error::Precondition("im2col needs a windowed layer".into()));
    }
    require_input(x, layer)?;
    let (kh, kw) = (layer.kernel_h, layer.kernel_w);
    let (out_h, out_w) = (layer.out_h(), layer.out_w());
    let rows = layer.shared_dim();
    let mut m = Im2ColMatrix::zeros(rows, out_h * out_w);
    for py in 0..out_h {
        for px in 0..out_w {
            let p = py * out_w + px;
            for c in 0..layer.channels {
                for r in 0..kh {
                    for s in 0..kw {
                        let y = (py * layer.stride + r) as isize - layer.padding as isize;
                        let xx = (px * layer.stride + s) as isize - layer.padding as isize;
                        m.set(shared_index(c, r, s, kh, kw), p, x.get_padded(c, y, xx));
                    }
                }
            }
        }
    }
    Ok(m)
}

/// Exact product. Partial sums are accumulated along the shared dimension in
/// ascending order; an output element whose running sum ever leaves `width`
/// counts as one overflow event.
pub fn gemm_reference(w: &WeightMatrix, m: &Im2ColMatrix, width: AccWidth) -> Result<OutputMatrix> {
    if w.cols() != m.rows() {
        return Err(Error::DimensionMismatch(format!(
            "weight matrix has {} columns, input has {} rows",
            w.cols(),
            m.rows()
        )));
    }
    let mut out = OutputMatrix::zeros(w.rows(), m.cols());
    let mut overflow = 0;
    for f in 0..w.rows() {
        let row = w.row(f);
        for p in 0..m.cols() {
            let col = m.column(p);
            let mut acc = 0i64;
            let mut overflowed = false;
            for (a, b) in row.iter().zip(col) {
                acc += i64::from(*a) * i64::from(*b);
                overflowed |= !width.fits(acc);
            }
            if overflowed {
                overflow += 1;
            }
            out.set(f, p, acc);
        }
    }
    out.set_overflow_events(overflow);
    Ok(out)
}

pub fn conv_reference(x: &FeatureMap, f: &FilterSet, layer: &LayerSpec) -> Result<FeatureMap> {
    if layer.kind != LayerKind::Conv {
        return Err(Error::Precondition("conv_reference needs a conv layer".into()));
    }
    require_input(x, layer)?;
    let (filters, channels, kh, kw) = f.dims();
    if filters != layer.filters || channels != layer.channels || kh != layer.kernel_h || kw != layer.kernel_w {
        return Err(Error::DimensionMismatch(format!(
            "filters are {:?}, layer expects ({}, {}, {}, {})",
            f.dims(),
            layer.filters,
            layer.channels,
            layer.kernel_h,
            layer.kernel_w
        )));
    }
    let (out_h, out_w) = (layer.out_h(), layer.out_w());
    let pad = layer.padding as isize;
    let mut out = FeatureMap::zeros(filters, out_h, out_w);
    for k in 0..filters {
        let bias = layer.bias.as_ref().map(|b| b[k]);
        for py in 0..out_h {
            for px in 0..out_w {
                let mut acc = 0i64;
                for c in 0..channels {
                    for r in 0..kh {
                        for s in 0..kw {
                            let y = (py * layer.stride + r) as isize - pad;
                            let xx = (px * layer.stride + s) as isize - pad;
                            acc += i64::from(x.get_padded(c, y, xx)) * i64::from(f.get(k, c, r, s));
                        }
                    }
                }
                out.set(k, py, px, finish_value(acc, bias, layer.relu, layer.shift));
            }
        }
    }
    Ok(out)
}

/// Places column `py * outW + px` of row `k` at `(k, py, px)`, applying the
/// layer's bias, ReLU and requantization shift.
pub fn reshape_output(o: &OutputMatrix, layer: &LayerSpec) -> Result<FeatureMap> {
    let (out_c, out_h, out_w) = layer.output_dims();
    if o.rows() != out_c || o.cols() != out_h * out_w {
        return Err(Error::DimensionMismatch(format!(
            "output matrix is {}x{}, layer produces {}x{}",
            o.rows(),
            o.cols(),
            out_c,
            out_h * out_w
        )));
    }
    let mut fm = FeatureMap::zeros(out_c, out_h, out_w);
    for k in 0..out_c {
        let bias = layer.bias.as_ref().map(|b| b[k]);
        for py in 0..out_h {
            for px in 0..out_w {
                let v = o.get(k, py * out_w + px);
                fm.set(k, py, px, finish_value(v, bias, layer.relu, layer.shift));
            }
        }
    }
    Ok(fm)
}

/// Reduces one pooling window. Average pooling truncates toward zero and
/// divides by the full window area, padding included.
pub fn pool_window(kind: LayerKind, values: impl Iterator<Item = i16>, area: usize) -> i16 {
    match kind {
        LayerKind::MaxPool => values.max().unwrap_or(0),
        LayerKind::AvgPool => {
            let sum: i64 = values.map(i64::from).sum();
            (sum / area as i64) as i16
        }
        _ => unreachable!("pool_window on a non-pool layer"),
    }
}

pub fn pool_reference(x: &FeatureMap, layer: &LayerSpec) -> Result<FeatureMap> {
    if !layer.kind.is_pool() {
        return Err(Error::Precondition("pool_reference needs a pooling layer".into()));
    }
    require_input(x, layer)?;
    let (out_h, out_w) = (layer.out_h(), layer.out_w());
    let pad = layer.padding as isize;
    let area = layer.kernel_area();
    let mut out = FeatureMap::zeros(layer.channels, out_h, out_w);
    for c in 0..layer.channels {
        for py in 0..out_h {
            for px in 0..out_w {
                let window = (0..layer.kernel_h).flat_map(|r| {
                    (0..layer.kernel_w).map(move |s| {
                        let y = (py * layer.stride + r) as isize - pad;
                        let xx = (px * layer.stride + s) as isize - pad;
                        x.get_padded(c, y, xx)
                    })
                });
                out.set(c, py, px, pool_window(layer.kind, window, area));
            }
        }
    }
    Ok(out)
}

/// Fully connected layer on a features x batch matrix: exact product plus
/// optional bias and ReLU, still in the accumulator domain.
pub fn fc_reference(w: &WeightMatrix, x: &Im2ColMatrix, bias: Option<&[i16]>, relu: bool) -> Result<OutputMatrix> {
    if let Some(b) = bias {
        if b.len() != w.rows() {
            return Err(Error::DimensionMismatch(format!(
                "bias has {} entries, weights have {} rows",
                b.len(),
                w.rows()
            )));
        }
    }
    let mut out = gemm_reference(w, x, AccWidth::Bits32)?;
    let cols = out.cols();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        if let Some(b) = bias {
            *v += i64::from(b[i / cols]);
        }
        if relu && *v < 0 {
            *v = 0;
        }
    }
    Ok(out)
}
