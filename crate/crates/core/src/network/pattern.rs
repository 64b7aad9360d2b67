use bitvec::prelude::*;

/// Per-site activation indicators: bit `i` of site `s` is set iff the
/// preactivation of unit `i` at that ReLU site is `>= 0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActivationPattern {
    sites: Vec<BitVec<u64, Lsb0>>,
}

/// A single (site, unit) coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UnitId {
    pub site: usize,
    pub unit: usize,
}

impl ActivationPattern {
    /// All-zero pattern for the given site widths.
    pub fn zeros(widths: &[usize]) -> Self {
        ActivationPattern {
            sites: widths.iter().map(|&w| bitvec![u64, Lsb0; 0; w]).collect(),
        }
    }

    /// All-one pattern (every unit active).
    pub fn ones(widths: &[usize]) -> Self {
        ActivationPattern {
            sites: widths.iter().map(|&w| bitvec![u64, Lsb0; 1; w]).collect(),
        }
    }

    pub fn from_bools(sites: &[Vec<bool>]) -> Self {
        ActivationPattern {
            sites: sites.iter().map(|s| s.iter().collect()).collect(),
        }
    }

    pub fn num_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.sites.iter().map(|s| s.len()).collect()
    }

    pub fn site(&self, site: usize) -> &BitSlice<u64, Lsb0> {
        &self.sites[site]
    }

    pub fn get(&self, id: UnitId) -> bool {
        self.sites[id.site][id.unit]
    }

    pub fn set(&mut self, id: UnitId, active: bool) {
        self.sites[id.site].set(id.unit, active);
    }

    pub fn flip(&mut self, id: UnitId) {
        let v = self.get(id);
        self.set(id, !v);
    }

    pub(crate) fn site_mut(&mut self, site: usize) -> &mut BitVec<u64, Lsb0> {
        &mut self.sites[site]
    }

    pub fn count_active(&self) -> usize {
        self.sites.iter().map(|s| s.count_ones()).sum()
    }

    /// Units whose bits differ, in ascending (site, unit) order.
    pub fn diff(&self, other: &Self) -> Vec<UnitId> {
        assert_eq!(self.widths(), other.widths(), "pattern layouts differ");
        let mut out = Vec::new();
        for (site, (a, b)) in self.sites.iter().zip(&other.sites).enumerate() {
            for unit in a
                .iter()
                .zip(b.iter())
                .enumerate()
                .filter_map(|(i, (x, y))| (*x != *y).then_some(i))
            {
                out.push(UnitId { site, unit });
            }
        }
        out
    }

    pub fn to_bools(&self) -> Vec<Vec<bool>> {
        self.sites
            .iter()
            .map(|s| s.iter().by_vals().collect())
            .collect()
    }
}
