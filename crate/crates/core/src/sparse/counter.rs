use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

/// The four operation classes of the eigensolver cost model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    /// LU factorization
    Fa,
    /// forward/backward substitution
    Fb,
    /// sparse matrix-vector product
    Mv,
    /// vector-vector operation
    Vv,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::Fa, Category::Fb, Category::Mv, Category::Vv];

    fn idx(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Category::Fa => "fa",
            Category::Fb => "fb",
            Category::Mv => "mv",
            Category::Vv => "vv",
        }
    }
}

/// Cumulative multiply-add and call counts per category.
///
/// Safe to share between threads; counts only grow until [`FlopCounter::reset`].
#[derive(Debug)]
pub struct FlopCounter {
    madds: [AtomicU64; 4],
    calls: [AtomicU64; 4],
    flops_per_madd: f64,
}

impl Default for FlopCounter {
    fn default() -> Self {
        Self::new(8.0)
    }
}

impl FlopCounter {
    /// `flops_per_madd` is the real-flop weight of one complex multiply-add.
    pub fn new(flops_per_madd: f64) -> Self {
        Self {
            madds: Default::default(),
            calls: Default::default(),
            flops_per_madd,
        }
    }

    /// Records one operation of `cat` costing `madds` multiply-adds.
    pub fn charge(&self, cat: Category, madds: u64) {
        self.madds[cat.idx()].fetch_add(madds, Ordering::Relaxed);
        self.calls[cat.idx()].fetch_add(1, Ordering::Relaxed);
    }

    /// Adds multiply-adds without counting an extra call.
    pub fn add_madds(&self, cat: Category, madds: u64) {
        self.madds[cat.idx()].fetch_add(madds, Ordering::Relaxed);
    }

    pub fn madds(&self, cat: Category) -> u64 {
        self.madds[cat.idx()].load(Ordering::Relaxed)
    }

    pub fn calls(&self, cat: Category) -> u64 {
        self.calls[cat.idx()].load(Ordering::Relaxed)
    }

    pub fn flops(&self, cat: Category) -> f64 {
        self.madds(cat) as f64 * self.flops_per_madd
    }

    pub fn flops_per_madd(&self) -> f64 {
        self.flops_per_madd
    }

    pub fn reset(&self) {
        for c in Category::ALL {
            self.madds[c.idx()].store(0, Ordering::Relaxed);
            self.calls[c.idx()].store(0, Ordering::Relaxed);
        }
    }

    pub fn snapshot(&self) -> CounterSnapshot {
        let get = |c: Category| CategoryCount {
            calls: self.calls(c),
            madds: self.madds(c),
            flops: self.flops(c),
        };
        let (fa, fb, mv, vv) = (get(Category::Fa), get(Category::Fb), get(Category::Mv), get(Category::Vv));
        CounterSnapshot {
            flops_per_madd: self.flops_per_madd,
            total_flops: fa.flops + fb.flops + mv.flops + vv.flops,
            fa,
            fb,
            mv,
            vv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CategoryCount {
    pub calls: u64,
    pub madds: u64,
    pub flops: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterSnapshot {
    pub flops_per_madd: f64,
    pub fa: CategoryCount,
    pub fb: CategoryCount,
    pub mv: CategoryCount,
    pub vv: CategoryCount,
    pub total_flops: f64,
}

impl CounterSnapshot {
    pub fn get(&self, cat: Category) -> CategoryCount {
        match cat {
            Category::Fa => self.fa,
            Category::Fb => self.fb,
            Category::Mv => self.mv,
            Category::Vv => self.vv,
        }
    }

    /// Per-category difference `self - earlier`.
    pub fn since(&self, earlier: &CounterSnapshot) -> CounterSnapshot {
        let d = |a: CategoryCount, b: CategoryCount| CategoryCount {
            calls: a.calls - b.calls,
            madds: a.madds - b.madds,
            flops: a.flops - b.flops,
        };
        let fa = d(self.fa, earlier.fa);
        let fb = d(self.fb, earlier.fb);
        let mv = d(self.mv, earlier.mv);
        let vv = d(self.vv, earlier.vv);
        CounterSnapshot {
            flops_per_madd: self.flops_per_madd,
            total_flops: fa.flops + fb.flops + mv.flops + vv.flops,
            fa,
            fb,
            mv,
            vv,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serializes")
    }
}
