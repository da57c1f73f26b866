//! Link-layer and IPv4 address helpers shared by every module.

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AddrError {
    #[error("invalid MAC address `{0}`")]
    Mac(String),
    #[error("invalid CIDR `{0}`")]
    Cidr(String),
    #[error("invalid VLAN id `{0}` (must be 1..=4094)")]
    Vlan(String),
}

/// 48-bit IEEE MAC address.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    pub const BROADCAST: MacAddr = MacAddr([0xff; 6]);

    /// Builds a locally administered address from a 40-bit counter. Handy
    /// for generated fixtures.
    pub fn from_index(prefix: u8, index: u64) -> MacAddr {
        let b = index.to_be_bytes();
        MacAddr([0x02 | (prefix << 2), b[3], b[4], b[5], b[6], b[7]])
    }

    pub fn is_broadcast(&self) -> bool {
        *self == Self::BROADCAST
    }

    pub fn is_multicast(&self) -> bool {
        self.0[0] & 0x01 == 1
    }

    pub fn as_u64(&self) -> u64 {
        let mut b = [0u8; 8];
        b[2..].copy_from_slice(&self.0);
        u64::from_be_bytes(b)
    }

    /// Cisco dotted notation (`xxxx.xxxx.xxxx`) as printed in port configs.
    pub fn cisco(&self) -> String {
        let m = &self.0;
        format!(
            "{:02x}{:02x}.{:02x}{:02x}.{:02x}{:02x}",
            m[0], m[1], m[2], m[3], m[4], m[5]
        )
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            m[0], m[1], m[2], m[3], m[4], m[5]
        )
    }
}

impl fmt::Debug for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for MacAddr {
    type Err = AddrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let hex: String = s.chars().filter(|c| !matches!(c, ':' | '-' | '.')).collect();
        if hex.len() != 12 || !hex.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(AddrError::Mac(s.to_string()));
        }
        let mut out = [0u8; 6];
        for (i, byte) in out.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&hex[i * 2..i * 2 + 2], 16)
                .map_err(|_| AddrError::Mac(s.to_string()))?;
        }
        Ok(MacAddr(out))
    }
}

impl From<MacAddr> for String {
    fn from(m: MacAddr) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for MacAddr {
    type Error = AddrError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// IPv4 network in prefix notation.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Cidr {
    network: u32,
    prefix: u8,
}

impl Cidr {
    pub const ANY: Cidr = Cidr { network: 0, prefix: 0 };

    pub fn new(addr: Ipv4Addr, prefix: u8) -> Result<Cidr, AddrError> {
        if prefix > 32 {
            return Err(AddrError::Cidr(format!("{addr}/{prefix}")));
        }
        let mask = Self::mask_for(prefix);
        Ok(Cidr { network: u32::from(addr) & mask, prefix })
    }

    pub fn host(addr: Ipv4Addr) -> Cidr {
        Cidr { network: u32::from(addr), prefix: 32 }
    }

    fn mask_for(prefix: u8) -> u32 {
        if prefix == 0 {
            0
        } else {
            u32::MAX << (32 - prefix)
        }
    }

    pub fn mask(&self) -> u32 {
        Self::mask_for(self.prefix)
    }

    pub fn prefix_len(&self) -> u8 {
        self.prefix
    }

    pub fn network(&self) -> Ipv4Addr {
        Ipv4Addr::from(self.network)
    }

    #[inline]
    pub fn contains(&self, addr: Ipv4Addr) -> bool {
        u32::from(addr) & self.mask() == self.network
    }

    #[inline]
    pub fn contains_u32(&self, addr: u32) -> bool {
        addr & self.mask() == self.network
    }

    pub fn is_any(&self) -> bool {
        self.prefix == 0
    }

    /// Number of addresses covered, as u64 so /0 fits.
    pub fn size(&self) -> u64 {
        1u64 << (32 - self.prefix as u32)
    }

    /// `n`-th address inside the block (0 is the network address).
    pub fn nth(&self, n: u32) -> Ipv4Addr {
        Ipv4Addr::from(self.network.wrapping_add(n))
    }
}

impl fmt::Display for Cidr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.network(), self.prefix)
    }
}

impl fmt::Debug for Cidr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Cidr {
    type Err = AddrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || AddrError::Cidr(s.to_string());
        match s.split_once('/') {
            Some((a, p)) => {
                let addr: Ipv4Addr = a.parse().map_err(|_| err())?;
                let prefix: u8 = p.parse().map_err(|_| err())?;
                Cidr::new(addr, prefix).map_err(|_| err())
            }
            None => {
                let addr: Ipv4Addr = s.parse().map_err(|_| err())?;
                Ok(Cidr::host(addr))
            }
        }
    }
}

impl From<Cidr> for String {
    fn from(c: Cidr) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for Cidr {
    type Error = AddrError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// RFC 1918 private space.
pub fn is_private(addr: Ipv4Addr) -> bool {
    addr.is_private()
}

/// 802.1Q VLAN identifier, 1..=4094.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub struct VlanId(u16);

impl VlanId {
    pub const DEFAULT: VlanId = VlanId(1);

    pub fn new(id: u16) -> Result<VlanId, AddrError> {
        if (1..=4094).contains(&id) {
            Ok(VlanId(id))
        } else {
            Err(AddrError::Vlan(id.to_string()))
        }
    }

    pub fn get(self) -> u16 {
        self.0
    }
}

impl TryFrom<u16> for VlanId {
    type Error = AddrError;
    fn try_from(v: u16) -> Result<Self, Self::Error> {
        VlanId::new(v)
    }
}

impl From<VlanId> for u16 {
    fn from(v: VlanId) -> u16 {
        v.0
    }
}

impl FromStr for VlanId {
    type Err = AddrError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let n: u16 = s.trim().parse().map_err(|_| AddrError::Vlan(s.to_string()))?;
        VlanId::new(n)
    }
}

impl fmt::Display for VlanId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for VlanId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "vlan{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mac_formats() {
        let m: MacAddr = "00:1a:2B:3c:4d:5e".parse().unwrap();
        assert_eq!(m.to_string(), "00:1a:2b:3c:4d:5e");
        assert_eq!(m.cisco(), "001a.2b3c.4d5e");
        assert_eq!("001a.2b3c.4d5e".parse::<MacAddr>().unwrap(), m);
        assert!("00:1a".parse::<MacAddr>().is_err());
        assert!(MacAddr::BROADCAST.is_broadcast());
    }

    #[test]
    fn cidr_contains_and_normalizes() {
        let c: Cidr = "17.1.2.3/8".parse().unwrap();
        assert_eq!(c.to_string(), "17.0.0.0/8");
        assert!(c.contains("17.255.0.1".parse().unwrap()));
        assert!(!c.contains("18.0.0.1".parse().unwrap()));
        assert!(Cidr::ANY.contains("1.2.3.4".parse().unwrap()));
        assert_eq!("10.0.0.5".parse::<Cidr>().unwrap().prefix_len(), 32);
        assert!("10.0.0.0/33".parse::<Cidr>().is_err());
    }

    #[test]
    fn vlan_range() {
        assert!(VlanId::new(0).is_err());
        assert!(VlanId::new(4095).is_err());
        assert_eq!(VlanId::new(4094).unwrap().get(), 4094);
    }
}
