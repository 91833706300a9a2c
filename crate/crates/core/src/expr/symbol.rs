//! Jet-bundle coordinates and named function symbols.

use smallvec::SmallVec;
use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

/// Interned-ish name used for fields and function symbols.
pub type Name = Arc<str>;

/// Display names of the base (independent) coordinates, by base index.
pub const BASE_NAMES: [&str; 3] = ["X", "Y", "Z"];

pub fn base_name(a: u8) -> &'static str {
    BASE_NAMES.get(a as usize).copied().unwrap_or("?")
}

pub fn base_index(letter: char) -> Option<u8> {
    BASE_NAMES
        .iter()
        .position(|n| n.starts_with(letter))
        .map(|i| i as u8)
}

/// A sorted multiset of base indices; `x^α_{AB}` and `x^α_{BA}` share one spelling.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct MultiIndex(SmallVec<[u8; 4]>);

impl MultiIndex {
    pub fn empty() -> Self {
        MultiIndex(SmallVec::new())
    }

    pub fn new(indices: impl IntoIterator<Item = u8>) -> Self {
        let mut v: SmallVec<[u8; 4]> = indices.into_iter().collect();
        v.sort_unstable();
        MultiIndex(v)
    }

    pub fn single(a: u8) -> Self {
        MultiIndex::new([a])
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn indices(&self) -> &[u8] {
        &self.0
    }

    /// The multi-index with one more base index `a`.
    pub fn with(&self, a: u8) -> Self {
        let mut v = self.0.clone();
        let pos = v.iter().position(|&x| x > a).unwrap_or(v.len());
        v.insert(pos, a);
        MultiIndex(v)
    }

    /// Splits off the leftmost (smallest) base index.
    pub fn split_first(&self) -> Option<(u8, MultiIndex)> {
        let (&first, rest) = self.0.split_first()?;
        Some((first, MultiIndex(rest.iter().copied().collect())))
    }

    pub fn letters(&self) -> String {
        self.0.iter().map(|&a| base_name(a)).collect()
    }

    /// All sorted multi-indices over `dim` base directions with order exactly `k`.
    pub fn all_of_order(dim: usize, k: usize) -> Vec<MultiIndex> {
        fn rec(dim: u8, k: usize, start: u8, cur: &mut Vec<u8>, out: &mut Vec<MultiIndex>) {
            if cur.len() == k {
                out.push(MultiIndex::new(cur.iter().copied()));
                return;
            }
            for a in start..dim {
                cur.push(a);
                rec(dim, k, a, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(dim as u8, k, 0, &mut Vec::new(), &mut out);
        out
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A coordinate on the jet bundle: `X^A`, `x^α`, or `x^α_𝔎`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Coordinate {
    Independent(u8),
    Field { name: Name, multi: MultiIndex },
}

impl Coordinate {
    pub fn field(name: &Name) -> Self {
        Coordinate::Field {
            name: name.clone(),
            multi: MultiIndex::empty(),
        }
    }

    pub fn jet(name: &Name, multi: MultiIndex) -> Self {
        Coordinate::Field {
            name: name.clone(),
            multi,
        }
    }

    /// Number of derivatives carried by the coordinate (0 for `X^A` and `x^α`).
    pub fn order(&self) -> usize {
        match self {
            Coordinate::Independent(_) => 0,
            Coordinate::Field { multi, .. } => multi.order(),
        }
    }

    pub fn is_derivative(&self) -> bool {
        self.order() > 0
    }

    fn kind_rank(&self) -> u8 {
        match self {
            Coordinate::Independent(_) => 0,
            Coordinate::Field { multi, .. } if multi.is_empty() => 1,
            Coordinate::Field { .. } => 2,
        }
    }
}

impl Ord for Coordinate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.kind_rank().cmp(&other.kind_rank()).then_with(|| match (self, other) {
            (Coordinate::Independent(a), Coordinate::Independent(b)) => a.cmp(b),
            (
                Coordinate::Field { name: n1, multi: m1 },
                Coordinate::Field { name: n2, multi: m2 },
            ) => n1.cmp(n2).then_with(|| m1.cmp(m2)),
            _ => Ordering::Equal,
        })
    }
}

impl PartialOrd for Coordinate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Coordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coordinate::Independent(a) => f.write_str(base_name(*a)),
            Coordinate::Field { name, multi } if multi.is_empty() => f.write_str(name),
            Coordinate::Field { name, multi } => write!(f, "{}_{}", name, multi.letters()),
        }
    }
}

/// A named smooth function of jet coordinates, e.g. the parameter `P(X)` or the
/// potential `A1(q1, q2, q3)`, together with the formal partials applied to it.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FunctionSymbol {
    pub name: Name,
    pub args: Arc<[Coordinate]>,
    /// Sorted positions into `args`, one per applied partial derivative.
    pub partials: SmallVec<[u8; 4]>,
}

impl FunctionSymbol {
    pub fn new(name: &Name, args: Arc<[Coordinate]>) -> Self {
        FunctionSymbol {
            name: name.clone(),
            args,
            partials: SmallVec::new(),
        }
    }

    /// A constant symbol with no arguments (`pi`, `t`, free rates).
    pub fn constant(name: &str) -> Self {
        FunctionSymbol {
            name: Name::from(name),
            args: Arc::from(Vec::new()),
            partials: SmallVec::new(),
        }
    }

    pub fn with_partial(&self, pos: usize) -> Self {
        let mut p = self.partials.clone();
        let pos = pos as u8;
        let at = p.iter().position(|&x| x > pos).unwrap_or(p.len());
        p.insert(at, pos);
        FunctionSymbol {
            name: self.name.clone(),
            args: self.args.clone(),
            partials: p,
        }
    }

    /// The undifferentiated function this symbol was derived from.
    pub fn root(&self) -> Self {
        FunctionSymbol::new(&self.name, self.args.clone())
    }

    /// True when every argument is an independent coordinate, i.e. a spatial parameter.
    pub fn is_parameter(&self) -> bool {
        self.args
            .iter()
            .all(|c| matches!(c, Coordinate::Independent(_)))
    }

    pub fn max_arg_order(&self) -> usize {
        self.args.iter().map(Coordinate::order).max().unwrap_or(0)
    }
}

impl Ord for FunctionSymbol {
    fn cmp(&self, other: &Self) -> Ordering {
        self.name
            .cmp(&other.name)
            .then_with(|| self.args.cmp(&other.args))
            .then_with(|| self.partials.len().cmp(&other.partials.len()))
            .then_with(|| self.partials.cmp(&other.partials))
    }
}

impl PartialOrd for FunctionSymbol {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for FunctionSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.partials.is_empty() {
            return f.write_str(&self.name);
        }
        if self.is_parameter() {
            write!(f, "{}_", self.name)?;
            for &p in &self.partials {
                write!(f, "{}", self.args[p as usize])?;
            }
            return Ok(());
        }
        write!(f, "D[{}", self.name)?;
        for &p in &self.partials {
            write!(f, ",{}", self.args[p as usize])?;
        }
        f.write_str("]")
    }
}

/// Anything that can appear as a leaf of an expression.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    // Function symbols sort first so that parameters lead products (`P*w_X`).
    Func(FunctionSymbol),
    Coord(Coordinate),
}

impl Symbol {
    pub fn field(name: &Name) -> Self {
        Symbol::Coord(Coordinate::field(name))
    }

    pub fn jet(name: &Name, multi: MultiIndex) -> Self {
        Symbol::Coord(Coordinate::jet(name, multi))
    }

    /// Jet order of the symbol, counting derivative coordinates used as function arguments.
    pub fn jet_order(&self) -> usize {
        match self {
            Symbol::Coord(c) => c.order(),
            Symbol::Func(f) => f.max_arg_order(),
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Coord(c) => c.fmt(f),
            Symbol::Func(s) => s.fmt(f),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_index_is_sorted() {
        let m = MultiIndex::new([1, 0]);
        assert_eq!(m, MultiIndex::new([0, 1]));
        assert_eq!(m.letters(), "XY");
        assert_eq!(MultiIndex::single(1).with(0), m);
    }

    #[test]
    fn all_of_order_counts() {
        assert_eq!(MultiIndex::all_of_order(3, 2).len(), 6);
        assert_eq!(MultiIndex::all_of_order(1, 3).len(), 1);
        assert_eq!(MultiIndex::all_of_order(2, 0), vec![MultiIndex::empty()]);
    }

    #[test]
    fn coordinates_render() {
        let w: Name = "w".into();
        assert_eq!(Coordinate::jet(&w, MultiIndex::new([0, 0])).to_string(), "w_XX");
        let p = FunctionSymbol::new(&"P".into(), Arc::from(vec![Coordinate::Independent(0)]));
        assert_eq!(p.with_partial(0).to_string(), "P_X");
        let q: Vec<Coordinate> = ["q1", "q2"].iter().map(|n| Coordinate::field(&Name::from(*n))).collect();
        let a = FunctionSymbol::new(&"A1".into(), Arc::from(q));
        assert_eq!(a.with_partial(1).with_partial(0).to_string(), "D[A1,q1,q2]");
    }
}
