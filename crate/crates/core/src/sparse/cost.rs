use serde::{Deserialize, Serialize};

use super::Category;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Discretization {
    Iga,
    Riga,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub label: String,
    /// Indexed like [`Category::ALL`].
    pub values: [f64; 4],
}

/// Asymptotic cost model of the shift-and-invert eigensolver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    pub n: usize,
    pub p: usize,
    pub nev: usize,
    pub nit: usize,
    pub discretization: Discretization,
    pub rows: Vec<CostRow>,
}

impl CostTable {
    pub fn row(&self, label: &str) -> Option<&CostRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// Total-cost row of the table's own discretization.
    pub fn selected_total(&self) -> &CostRow {
        match self.discretization {
            Discretization::Iga => &self.rows[3],
            Discretization::Riga => &self.rows[4],
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("row");
        for c in Category::ALL {
            s.push(',');
            s.push_str(c.label());
        }
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!("\"{}\"", r.label));
            for v in r.values {
                s.push_str(&format!(",{v:e}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Call counts, per-call orders and totals for IGA and rIGA, plus the
/// IGA/rIGA ratio row (both discretizations evaluated at the same `n`).
pub fn theoretical_costs(n: usize, p: usize, nev: usize, nit: usize, discretization: Discretization) -> CostTable {
    let (nf, pf) = (n as f64, p as f64);
    let (ne, it) = (nev as f64, nit as f64);
    let calls = [1.0, ne * it, 5.0 * ne * it, 2.0 * ne * ne * it];
    let iga = [nf.powf(1.5) * pf.powi(3), nf * pf * pf, nf * pf * pf, nf];
    let riga = [nf.powf(1.5) * pf, nf * pf, nf * pf * pf, nf];
    let total = |per: &[f64; 4]| -> [f64; 4] { std::array::from_fn(|i| calls[i] * per[i]) };
    let (ti, tr) = (total(&iga), total(&riga));
    let ratio: [f64; 4] = std::array::from_fn(|i| iga[i] / riga[i]);
    let row = |label: &str, values| CostRow {
        label: label.to_string(),
        values,
    };
    CostTable {
        n,
        p,
        nev,
        nit,
        discretization,
        rows: vec![
            row("calls", calls),
            row("cost per call (iga)", iga),
            row("cost per call (riga)", riga),
            row("total (iga)", ti),
            row("total (riga)", tr),
            row("improvement iga/riga", ratio),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn call_counts() {
        let t = theoretical_costs(1000, 4, 500, 1, Discretization::Iga);
        assert_eq!(t.rows[0].values, [1.0, 500.0, 2500.0, 500000.0]);
        assert_eq!(t.rows.len(), 6);
    }

    #[test]
    fn factorization_ratio_is_p_squared() {
        for p in 2..=6 {
            let t = theoretical_costs(4096, p, 10, 2, Discretization::Riga);
            let r = t.row("improvement iga/riga").unwrap().values;
            assert!((r[0] - (p * p) as f64).abs() < 1e-9);
            assert!((r[1] - p as f64).abs() < 1e-9);
            assert_eq!(r[2], 1.0);
            assert_eq!(r[3], 1.0);
        }
    }

    #[test]
    fn zero_eigenpairs() {
        let t = theoretical_costs(100, 3, 0, 5, Discretization::Iga);
        assert_eq!(t.rows[0].values, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(t.selected_total().values[1..], [0.0, 0.0, 0.0]);
        assert!(t.to_csv().starts_with("row,fa,fb,mv,vv\n"));
    }
}
