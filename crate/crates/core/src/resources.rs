//! IP prefixes, AS ranges and resource-set containment.

use std::fmt;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ResourceError {
    #[error("prefix length {0} out of range")]
    Length(u8),
    #[error("host bits set in prefix")]
    HostBits,
    #[error("cannot parse {0:?}")]
    Parse(String),
    #[error("AS range {0}-{1} is inverted")]
    AsRange(u32, u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Afi {
    Ipv4,
    Ipv6,
}

impl Afi {
    pub fn bits(self) -> u8 {
        match self {
            Afi::Ipv4 => 32,
            Afi::Ipv6 => 128,
        }
    }

    /// The two-byte address family identifier used in RFC 3779 encodings.
    pub fn code(self) -> u16 {
        match self {
            Afi::Ipv4 => 1,
            Afi::Ipv6 => 2,
        }
    }

    pub fn from_code(code: u64) -> Option<Afi> {
        match code {
            1 => Some(Afi::Ipv4),
            2 => Some(Afi::Ipv6),
            _ => None,
        }
    }
}

//------------ Prefix --------------------------------------------------------

/// An IP prefix with all host bits cleared.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Prefix {
    addr: IpAddr,
    len: u8,
}

impl Prefix {
    pub fn new(addr: IpAddr, len: u8) -> Result<Self, ResourceError> {
        let p = Prefix { addr, len };
        if len > p.afi().bits() {
            return Err(ResourceError::Length(len));
        }
        if p.bits() & !p.mask() != 0 {
            return Err(ResourceError::HostBits);
        }
        Ok(p)
    }

    pub fn v4(a: u8, b: u8, c: u8, d: u8, len: u8) -> Result<Self, ResourceError> {
        Prefix::new(Ipv4Addr::new(a, b, c, d).into(), len)
    }

    pub fn addr(&self) -> IpAddr {
        self.addr
    }

    pub fn len(&self) -> u8 {
        self.len
    }

    pub fn afi(&self) -> Afi {
        match self.addr {
            IpAddr::V4(_) => Afi::Ipv4,
            IpAddr::V6(_) => Afi::Ipv6,
        }
    }

    /// The address left-aligned in a u128.
    fn bits(&self) -> u128 {
        match self.addr {
            IpAddr::V4(a) => (u32::from(a) as u128) << 96,
            IpAddr::V6(a) => u128::from(a),
        }
    }

    fn mask(&self) -> u128 {
        if self.len == 0 {
            0
        } else {
            u128::MAX << (128 - self.len as u32)
        }
    }

    /// First and last address, left-aligned.
    pub fn range(&self) -> (u128, u128) {
        let start = self.bits();
        (start, start | !self.mask())
    }

    /// Address bytes in network order (4 or 16 bytes).
    pub fn octets(&self) -> Vec<u8> {
        match self.addr {
            IpAddr::V4(a) => a.octets().to_vec(),
            IpAddr::V6(a) => a.octets().to_vec(),
        }
    }

    /// The significant bytes of the address, `ceil(len / 8)` of them.
    pub fn significant_octets(&self) -> Vec<u8> {
        let mut o = self.octets();
        o.truncate((self.len as usize).div_ceil(8));
        o
    }

    /// Builds a prefix from significant bytes, requiring a minimal and
    /// zero-padded representation.
    pub fn from_octets(afi: Afi, bytes: &[u8], len: u8) -> Result<Self, ResourceError> {
        if len > afi.bits() {
            return Err(ResourceError::Length(len));
        }
        if bytes.len() != (len as usize).div_ceil(8) {
            return Err(ResourceError::Length(len));
        }
        let addr = match afi {
            Afi::Ipv4 => {
                let mut o = [0u8; 4];
                o[..bytes.len()].copy_from_slice(bytes);
                IpAddr::from(o)
            }
            Afi::Ipv6 => {
                let mut o = [0u8; 16];
                o[..bytes.len()].copy_from_slice(bytes);
                IpAddr::from(o)
            }
        };
        Prefix::new(addr, len)
    }

    pub fn covers(&self, other: &Prefix) -> bool {
        self.afi() == other.afi() && self.len <= other.len && {
            let (a, b) = self.range();
            let (c, d) = other.range();
            a <= c && d <= b
        }
    }
}

impl PartialOrd for Prefix {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Prefix {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.afi(), self.bits(), self.len).cmp(&(other.afi(), other.bits(), other.len))
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "{}/{}", self.addr, self.len)
    }
}

impl FromStr for Prefix {
    type Err = ResourceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ResourceError::Parse(s.to_string());
        let (addr, len) = s.split_once('/').ok_or_else(err)?;
        let addr = IpAddr::from_str(addr).map_err(|_| err())?;
        let len = len.parse().map_err(|_| err())?;
        Prefix::new(addr, len)
    }
}

impl Serialize for Prefix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Prefix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Returns the IPv4 /24 with the given index, counting up from 10.0.0.0.
pub fn synthetic_v4(index: u32) -> Prefix {
    let base = u32::from(Ipv4Addr::new(10, 0, 0, 0));
    let addr = Ipv4Addr::from(base.wrapping_add(index << 8));
    Prefix::new(addr.into(), 24).expect("aligned /24")
}

/// The minimal list of IPv4 prefixes covering the addresses from `lo` up to
/// but excluding `hi`.
pub fn v4_range_prefixes(mut lo: u64, hi: u64) -> Vec<Prefix> {
    let hi = hi.min(1 << 32);
    let mut out = Vec::new();
    while lo < hi {
        let mut size = if lo == 0 { 1u64 << 32 } else { lo & lo.wrapping_neg() };
        while size > hi - lo {
            size >>= 1;
        }
        let len = 32 - size.trailing_zeros() as u8;
        out.push(Prefix::new(Ipv4Addr::from(lo as u32).into(), len).expect("aligned"));
        lo += size;
    }
    out
}

pub fn v6_default() -> Prefix {
    Prefix::new(Ipv6Addr::UNSPECIFIED.into(), 0).unwrap()
}

pub fn v4_default() -> Prefix {
    Prefix::new(Ipv4Addr::UNSPECIFIED.into(), 0).unwrap()
}

//------------ AsRange -------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AsRange {
    pub min: u32,
    pub max: u32,
}

impl AsRange {
    pub fn new(min: u32, max: u32) -> Result<Self, ResourceError> {
        if min > max {
            return Err(ResourceError::AsRange(min, max));
        }
        Ok(AsRange { min, max })
    }

    pub fn single(asn: u32) -> Self {
        AsRange { min: asn, max: asn }
    }

    pub fn all() -> Self {
        AsRange { min: 0, max: u32::MAX }
    }
}

//------------ ResourceSet ---------------------------------------------------

/// A normalized set of IP and AS resources supporting containment tests.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ResourceSet {
    v4: Vec<(u128, u128)>,
    v6: Vec<(u128, u128)>,
    asn: Vec<(u32, u32)>,
}

fn merge<T: Ord + Copy>(mut ranges: Vec<(T, T)>, adjacent: impl Fn(T, T) -> bool) -> Vec<(T, T)> {
    ranges.sort();
    let mut out: Vec<(T, T)> = Vec::with_capacity(ranges.len());
    for (a, b) in ranges {
        match out.last_mut() {
            Some(last) if a <= last.1 || adjacent(last.1, a) => {
                if b > last.1 {
                    last.1 = b;
                }
            }
            _ => out.push((a, b)),
        }
    }
    out
}

fn covered<T: Ord + Copy>(set: &[(T, T)], a: T, b: T) -> bool {
    let i = set.partition_point(|r| r.1 < a);
    set.get(i).is_some_and(|r| r.0 <= a && b <= r.1)
}

impl ResourceSet {
    pub fn new(prefixes: &[Prefix], asns: &[AsRange]) -> Self {
        let adj = |x: u128, y: u128| x.checked_add(1) == Some(y);
        let v4 = prefixes.iter().filter(|p| p.afi() == Afi::Ipv4).map(|p| p.range()).collect();
        let v6 = prefixes.iter().filter(|p| p.afi() == Afi::Ipv6).map(|p| p.range()).collect();
        ResourceSet {
            v4: merge(v4, adj),
            v6: merge(v6, adj),
            asn: merge(
                asns.iter().map(|r| (r.min, r.max)).collect(),
                |x: u32, y: u32| x.checked_add(1) == Some(y),
            ),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.v4.is_empty() && self.v6.is_empty() && self.asn.is_empty()
    }

    pub fn contains_prefix(&self, p: &Prefix) -> bool {
        let (a, b) = p.range();
        match p.afi() {
            Afi::Ipv4 => covered(&self.v4, a, b),
            Afi::Ipv6 => covered(&self.v6, a, b),
        }
    }

    pub fn contains_asn(&self, r: &AsRange) -> bool {
        covered(&self.asn, r.min, r.max)
    }

    pub fn contains(&self, other: &ResourceSet) -> bool {
        other.v4.iter().all(|(a, b)| covered(&self.v4, *a, *b))
            && other.v6.iter().all(|(a, b)| covered(&self.v6, *a, *b))
            && other.asn.iter().all(|(a, b)| covered(&self.asn, *a, *b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_decomposition() {
        let p = |s: &str| s.parse::<Prefix>().unwrap();
        let base = u32::from(Ipv4Addr::new(10, 0, 0, 0)) as u64;
        assert_eq!(v4_range_prefixes(base, base + (1 << 16)), vec![p("10.0.0.0/16")]);
        assert_eq!(v4_range_prefixes(base + 256, base + 1024), vec![p("10.0.1.0/24"), p("10.0.2.0/23")]);
        assert_eq!(v4_range_prefixes(0, 1 << 32), vec![p("0.0.0.0/0")]);
        assert!(v4_range_prefixes(5, 5).is_empty());
    }

    #[test]
    fn prefix_parse_and_display() {
        let p: Prefix = "10.0.0.0/24".parse().unwrap();
        assert_eq!(p.to_string(), "10.0.0.0/24");
        assert_eq!(p.significant_octets(), vec![10, 0, 0]);
        assert!("10.0.0.1/24".parse::<Prefix>().is_err());
        assert!("10.0.0.0/33".parse::<Prefix>().is_err());
        let q: Prefix = "2001:db8::/32".parse().unwrap();
        assert_eq!(q.significant_octets(), vec![0x20, 0x01, 0x0d, 0xb8]);
        assert_eq!(Prefix::from_octets(Afi::Ipv6, &[0x20, 0x01, 0x0d, 0xb8], 32).unwrap(), q);
        assert!(Prefix::from_octets(Afi::Ipv4, &[10, 0, 0, 0], 24).is_err());
    }

    #[test]
    fn synthetic_prefixes() {
        assert_eq!(synthetic_v4(0).to_string(), "10.0.0.0/24");
        assert_eq!(synthetic_v4(1).to_string(), "10.0.1.0/24");
        assert_eq!(synthetic_v4(256).to_string(), "10.1.0.0/24");
        assert_eq!(synthetic_v4(65536).to_string(), "11.0.0.0/24");
    }

    #[test]
    fn containment() {
        let p = |s: &str| s.parse::<Prefix>().unwrap();
        let set = ResourceSet::new(&[p("10.0.0.0/25"), p("10.0.0.128/25")], &[AsRange::new(10, 20).unwrap(), AsRange::single(21)]);
        assert!(set.contains_prefix(&p("10.0.0.0/24")));
        assert!(!set.contains_prefix(&p("10.0.0.0/23")));
        assert!(!set.contains_prefix(&p("::/0")));
        assert!(set.contains_asn(&AsRange::new(15, 21).unwrap()));
        assert!(!set.contains_asn(&AsRange::single(22)));
        let all = ResourceSet::new(&[v4_default(), v6_default()], &[AsRange::all()]);
        assert!(all.contains(&set));
        assert!(!set.contains(&all));
        assert!(set.contains(&ResourceSet::default()));
    }

    #[test]
    fn ordering_is_family_address_length() {
        let mut v: Vec<Prefix> = ["::/0", "10.0.0.0/24", "10.0.0.0/8", "9.0.0.0/8"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        v.sort();
        let s: Vec<String> = v.iter().map(|p| p.to_string()).collect();
        assert_eq!(s, ["9.0.0.0/8", "10.0.0.0/8", "10.0.0.0/24", "::/0"]);
    }
}
