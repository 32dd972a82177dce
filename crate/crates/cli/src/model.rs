//! JSON form of trained parameters.

use serde::{Deserialize, Serialize};

use sagda_core::trainer::Variant;
use sagda_core::{EncoderParams, Heads, Matrix};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&Matrix> for MatrixJson {
    fn from(m: &Matrix) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            data: m.data().to_vec(),
        }
    }
}

impl MatrixJson {
    fn into_matrix(self, name: &str) -> sagda_core::Result<Matrix> {
        Matrix::new(self.rows, self.cols, self.data)
            .map_err(|e| sagda_core::Error::Contract(format!("model parameter {name}: {e}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub variant: Variant,
    pub w1: MatrixJson,
    pub w2: MatrixJson,
    pub att_proj: MatrixJson,
    pub att_local: MatrixJson,
    pub att_global: MatrixJson,
    pub label_w: MatrixJson,
    pub label_b: MatrixJson,
    pub domain_w: MatrixJson,
    pub domain_b: MatrixJson,
}

impl ModelFile {
    pub fn new(variant: Variant, e: &EncoderParams, h: &Heads) -> Self {
        Self {
            variant,
            w1: (&e.w1).into(),
            w2: (&e.w2).into(),
            att_proj: (&e.att_proj).into(),
            att_local: (&e.att_local).into(),
            att_global: (&e.att_global).into(),
            label_w: (&h.label_w).into(),
            label_b: (&h.label_b).into(),
            domain_w: (&h.domain_w).into(),
            domain_b: (&h.domain_b).into(),
        }
    }

    pub fn into_params(self) -> sagda_core::Result<(Variant, EncoderParams, Heads)> {
        let enc = EncoderParams {
            w1: self.w1.into_matrix("w1")?,
            w2: self.w2.into_matrix("w2")?,
            att_proj: self.att_proj.into_matrix("att_proj")?,
            att_local: self.att_local.into_matrix("att_local")?,
            att_global: self.att_global.into_matrix("att_global")?,
        };
        let heads = Heads {
            label_w: self.label_w.into_matrix("label_w")?,
            label_b: self.label_b.into_matrix("label_b")?,
            domain_w: self.domain_w.into_matrix("domain_w")?,
            domain_b: self.domain_b.into_matrix("domain_b")?,
        };
        let h2 = enc.w2.cols();
        let consistent = enc.w1.cols() == enc.w2.rows()
            && enc.att_proj.shape() == (h2, h2)
            && enc.att_local.shape() == (2 * h2, 1)
            && enc.att_global.shape() == (2 * h2, 1)
            && heads.label_w.rows() == h2
            && heads.label_b.shape() == (1, heads.label_w.cols())
            && heads.domain_w.shape() == (h2, 1)
            && heads.domain_b.shape() == (1, 1);
        if !consistent {
            return Err(sagda_core::Error::Contract("model parameters have inconsistent shapes".into()));
        }
        Ok((self.variant, enc, heads))
    }
}
