use crate::error::{Error, Result};

fn check_len(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch(format!(
            "{what}: expected {expected} values, got {got}"
        )));
    }
    Ok(())
}

/// C x H x W feature map, channel-major then row then column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<i16>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<i16>) -> Result<Self> {
        check_len("feature map", channels * height * width, data.len())?;
        Ok(FeatureMap {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        FeatureMap {
            channels,
            height,
            width,
            data: vec![0; channels * height * width],
        }
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> i16,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        FeatureMap {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> i16 {
        self.data[self.index(c, y, x)]
    }

    /// Value at signed coordinates, zero outside the map (logical padding).
    #[inline]
    pub fn get_padded(&self, c: usize, y: isize, x: isize) -> i16 {
        if y < 0 || x < 0 || y as usize >= self.height || x as usize >= self.width {
            0
        } else {
            self.get(c, y as usize, x as usize)
        }
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: i16) {
        let i = self.index(c, y, x);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[i16] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [i16] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<i16> {
        self.data
    }
}

/// F filters of shape C x R x S_k.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterSet {
    filters: usize,
    channels: usize,
    kernel_h: usize,
    kernel_w: usize,
    data: Vec<i16>,
}

impl FilterSet {
    pub fn new(filters: usize, channels: usize, kernel_h: usize, kernel_w: usize, data: Vec<i16>) -> Result<Self> {
        check_len("filter set", filters * channels * kernel_h * kernel_w, data.len())?;
        Ok(FilterSet {
            filters,
            channels,
            kernel_h,
            kernel_w,
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.filters, self.channels, self.kernel_h, self.kernel_w)
    }

    #[inline]
    pub fn get(&self, k: usize, c: usize, r: usize, s: usize) -> i16 {
        self.data[((k * self.channels + c) * self.kernel_h + r) * self.kernel_w + s]
    }

    pub fn data(&self) -> &[i16] {
        &self.data
    }
}

/// Linear position of `(c, r, s)` along the shared dimension. Weight-matrix
/// columns and Im2Col rows both use this order.
#[inline]
pub fn shared_index(c: usize, r: usize, s: usize, kernel_h: usize, kernel_w: usize) -> usize {
    c * (kernel_h * kernel_w) + r * kernel_w + s
}

/// Dense F x (R*S_k*C) filter matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i16>,
}

impl WeightMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<i16>) -> Result<Self> {
        check_len("weight matrix", rows * cols, data.len())?;
        Ok(WeightMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        WeightMatrix {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut w = WeightMatrix::zeros(n, n);
        for i in 0..n {
            w.set(i, i, 1);
        }
        w
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> i16 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: i16) {
        self.data[row * self.cols + col] = v;
    }

    pub fn row(&self, row: usize) -> &[i16] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn data(&self) -> &[i16] {
        &self.data
    }

    pub fn nnz(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Inverse of [`crate::model::flatten_filters`].
    pub fn to_filters(&self, channels: usize, kernel_h: usize, kernel_w: usize) -> Result<FilterSet> {
        if channels * kernel_h * kernel_w != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "weight matrix has {} columns, filter shape {channels}x{kernel_h}x{kernel_w} needs {}",
                self.cols,
                channels * kernel_h * kernel_w
            )));
        }
        FilterSet::new(self.rows, channels, kernel_h, kernel_w, self.data.clone())
    }
}

/// (R*S_k*C) x P patch matrix. Stored column-major: each patch is one
/// contiguous column, which is the unit the hardware emits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Im2ColMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i16>,
}

impl Im2ColMatrix {
    /// Builds from column-major data.
    pub fn from_columns(rows: usize, cols: usize, data: Vec<i16>) -> Result<Self> {
        check_len("im2col matrix", rows * cols, data.len())?;
        Ok(Im2ColMatrix { rows, cols, data })
    }

    /// Builds from row-major data (the layout of an FC input batch:
    /// features x batch).
    pub fn from_row_major(rows: usize, cols: usize, data: &[i16]) -> Result<Self> {
        check_len("im2col matrix", rows * cols, data.len())?;
        let mut out = vec![0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                out[c * rows + r] = data[r * cols + c];
            }
        }
        Ok(Im2ColMatrix { rows, cols, data: out })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Im2ColMatrix {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> i16 {
        self.data[col * self.rows + row]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: i16) {
        self.data[col * self.rows + row] = v;
    }

    pub fn column(&self, col: usize) -> &[i16] {
        &self.data[col * self.rows..(col + 1) * self.rows]
    }

    pub fn data(&self) -> &[i16] {
        &self.data
    }

    /// Copy of columns `[start, end)`.
    pub fn slice_columns(&self, start: usize, end: usize) -> Im2ColMatrix {
        Im2ColMatrix {
            rows: self.rows,
            cols: end - start,
            data: self.data[start * self.rows..end * self.rows].to_vec(),
        }
    }

    /// Concatenates column blocks that share a row count.
    pub fn concat_columns<'a>(parts: impl IntoIterator<Item = &'a Im2ColMatrix>) -> Result<Self> {
        let mut rows = None;
        let mut cols = 0;
        let mut data = Vec::new();
        for p in parts {
            match rows {
                None => rows = Some(p.rows),
                Some(r) if r != p.rows => {
                    return Err(Error::DimensionMismatch(format!(
                        "cannot concatenate {r}-row and {}-row column blocks",
                        p.rows
                    )))
                }
                _ => {}
            }
            cols += p.cols;
            data.extend_from_slice(&p.data);
        }
        Ok(Im2ColMatrix {
            rows: rows.unwrap_or(0),
            cols,
            data,
        })
    }
}

/// F x P accumulator matrix, row-major. Values are exact; `overflow_events`
/// counts output elements whose running sum left the configured accumulator
/// range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i64>,
    overflow_events: usize,
}

impl OutputMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        OutputMatrix {
            rows,
            cols,
            data: vec![0; rows * cols],
            overflow_events: 0,
        }
    }

    pub fn new(rows: usize, cols: usize, data: Vec<i64>) -> Result<Self> {
        check_len("output matrix", rows * cols, data.len())?;
        Ok(OutputMatrix {
            rows,
            cols,
            data,
            overflow_events: 0,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> i64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: i64) {
        self.data[row * self.cols + col] = v;
    }

    pub fn data(&self) -> &[i64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [i64] {
        &mut self.data
    }

    pub fn overflow_events(&self) -> usize {
        self.overflow_events
    }

    pub(crate) fn set_overflow_events(&mut self, n: usize) {
        self.overflow_events = n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_map_layout() {
        let fm = FeatureMap::from_fn(2, 2, 3, |c, y, x| (c * 100 + y * 10 + x) as i16);
        assert_eq!(fm.data()[fm.index(1, 1, 2)], 112);
        assert_eq!(fm.get_padded(0, -1, 0), 0);
        assert_eq!(fm.get_padded(0, 1, 3), 0);
        assert_eq!(fm.get_padded(1, 0, 1), 101);
    }

    #[test]
    fn length_checked() {
        assert!(FeatureMap::new(1, 2, 2, vec![0; 3]).is_err());
        assert!(WeightMatrix::new(2, 2, vec![0; 5]).is_err());
    }

    #[test]
    fn im2col_row_major_conversion() {
        let m = Im2ColMatrix::from_row_major(2, 3, &[1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(m.column(0), &[1, 4]);
        assert_eq!(m.get(1, 2), 6);
        let parts = [m.slice_columns(0, 1), m.slice_columns(1, 3)];
        assert_eq!(Im2ColMatrix::concat_columns(&parts).unwrap(), m);
    }
}
