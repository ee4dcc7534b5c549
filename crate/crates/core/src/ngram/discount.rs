use super::counts::NGramCountTable;

/// Modified Kneser-Ney discounts for one order: counts 1, 2 and 3+.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discounts {
    pub d1: f64,
    pub d2: f64,
    pub d3plus: f64,
}

impl Discounts {
    pub const FALLBACK: Discounts = Discounts {
        d1: 0.5,
        d2: 0.5,
        d3plus: 0.5,
    };

    /// Closed-form estimate from count-of-counts `[n1, n2, n3, n4]`, where
    /// `n_k` is the number of n-grams seen exactly k times. Returns `None`
    /// when the statistics are degenerate: some `n_k` is zero or an estimate
    /// is not positive.
    pub fn from_count_of_counts(n: [u64; 4]) -> Option<Discounts> {
        if n.contains(&0) {
            return None;
        }
        let [n1, n2, n3, n4] = n.map(|x| x as f64);
        let y = n1 / (n1 + 2.0 * n2);
        let d = Discounts {
            d1: (1.0 - 2.0 * y * n2 / n1).min(1.0),
            d2: (2.0 - 3.0 * y * n3 / n2).min(2.0),
            d3plus: (3.0 - 4.0 * y * n4 / n3).min(3.0),
        };
        (d.d1 > 0.0 && d.d2 > 0.0 && d.d3plus > 0.0).then_some(d)
    }

    pub fn for_count(&self, count: u64) -> f64 {
        match count {
            0 => 0.0,
            1 => self.d1,
            2 => self.d2,
            _ => self.d3plus,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscountSet {
    /// Index k-1 holds the discounts for order k.
    pub orders: Vec<Discounts>,
    /// Orders whose count-of-counts were degenerate.
    pub fallback: Vec<bool>,
}

impl DiscountSet {
    pub fn uniform(order: usize, d: Discounts) -> Self {
        DiscountSet {
            orders: vec![d; order],
            fallback: vec![false; order],
        }
    }

    pub fn get(&self, k: usize) -> &Discounts {
        &self.orders[k - 1]
    }
}

/// Estimates per-order discounts from the count-of-counts of the adjusted
/// counts each order is smoothed with.
pub fn estimate_discounts(counts: &NGramCountTable) -> DiscountSet {
    let mut orders = Vec::new();
    let mut fallback = Vec::new();
    for k in 1..=counts.order() {
        let mut coc = [0u64; 4];
        for (g, _) in counts.grams(k) {
            let a = counts.adjusted(g);
            if (1..=4).contains(&a) {
                coc[a as usize - 1] += 1;
            }
        }
        match Discounts::from_count_of_counts(coc) {
            Some(d) => {
                orders.push(d);
                fallback.push(false);
            }
            None => {
                log::warn!(
                    "order {k}: degenerate count-of-counts {coc:?}, using fallback discounts 0.5"
                );
                orders.push(Discounts::FALLBACK);
                fallback.push(true);
            }
        }
    }
    DiscountSet { orders, fallback }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form() {
        // Y = 2/(2+2) = 0.5; D1 = 1 - 2*0.5*1/2; D2 = 2 - 3*0.5*1/1; D3+ = 3 - 4*0.5*1/1
        let d = Discounts::from_count_of_counts([2, 1, 1, 1]).unwrap();
        assert!((d.d1 - 0.5).abs() < 1e-15);
        assert!((d.d2 - 0.5).abs() < 1e-15);
        assert!((d.d3plus - 1.0).abs() < 1e-15);
    }

    #[test]
    fn larger_counts() {
        // Y = 10/16; D1 = 1 - 2*(10/16)*3/10 = 0.625; D2 = 2 - 3*(10/16)*2/3 = 0.75;
        // D3+ = 3 - 4*(10/16)*1/2 = 1.75
        let d = Discounts::from_count_of_counts([10, 3, 2, 1]).unwrap();
        assert!((d.d1 - 0.625).abs() < 1e-15);
        assert!((d.d2 - 0.75).abs() < 1e-15);
        assert!((d.d3plus - 1.75).abs() < 1e-15);
    }

    #[test]
    fn degenerate_falls_back() {
        assert_eq!(Discounts::from_count_of_counts([3, 0, 1, 1]), None);
        assert_eq!(Discounts::from_count_of_counts([0, 0, 0, 0]), None);
        // D2 = 2 - 3*(1/3)*10/1 < 0
        assert_eq!(Discounts::from_count_of_counts([1, 1, 10, 1]), None);
    }

    #[test]
    fn estimate_uses_fallback_on_tiny_corpus() {
        use crate::text::{build_vocabulary, Corpus};
        use std::sync::Arc;
        let c = Corpus::from_lines("c", ["a b a"]);
        let v = Arc::new(build_vocabulary(&[&c], 1, None).unwrap());
        let t = super::super::count_ngrams(&c, 2, v).unwrap();
        let d = estimate_discounts(&t);
        assert_eq!(d.orders, vec![Discounts::FALLBACK; 2]);
        assert_eq!(d.fallback, vec![true, true]);
    }
}
