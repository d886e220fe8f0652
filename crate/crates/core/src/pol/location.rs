use std::fmt;

use zeroize::{Zeroize, ZeroizeOnDrop};

use crate::crypto::{hash_parts, SecretKey};
use crate::wire::{put_i32, Decode, Encode, Reader, WireError};

use super::{Nonce, PolError};

const E7: f64 = 1e7;
const EARTH_RADIUS_M: f64 = 6_371_008.8;
const SEAL_LABEL: &[u8] = b"bychain/location/seal";
const KEY_LABEL: &[u8] = b"bychain/location/key";

/// Geodetic position in fixed-point degrees at 1e-7 resolution (about 1 cm).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Location {
    lat_e7: i32,
    lon_e7: i32,
}

impl Location {
    pub const ENCODED_LEN: usize = 8;

    pub fn from_e7(lat_e7: i32, lon_e7: i32) -> Result<Self, PolError> {
        if lat_e7.unsigned_abs() > 900_000_000 || lon_e7.unsigned_abs() > 1_800_000_000 {
            return Err(PolError::InvalidLocation);
        }
        Ok(Location { lat_e7, lon_e7 })
    }

    pub fn from_degrees(lat: f64, lon: f64) -> Result<Self, PolError> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(PolError::InvalidLocation);
        }
        let lat_e7 = (lat * E7).round();
        let lon_e7 = (lon * E7).round();
        if lat_e7.abs() > 9e8 || lon_e7.abs() > 1.8e9 {
            return Err(PolError::InvalidLocation);
        }
        Self::from_e7(lat_e7 as i32, lon_e7 as i32)
    }

    pub fn lat_e7(&self) -> i32 {
        self.lat_e7
    }

    pub fn lon_e7(&self) -> i32 {
        self.lon_e7
    }

    pub fn lat_deg(&self) -> f64 {
        self.lat_e7 as f64 / E7
    }

    pub fn lon_deg(&self) -> f64 {
        self.lon_e7 as f64 / E7
    }

    /// Great-circle (haversine) distance in meters.
    pub fn distance_m(&self, other: &Location) -> f64 {
        let (p1, p2) = (self.lat_deg().to_radians(), other.lat_deg().to_radians());
        let dp = p2 - p1;
        let dl = (other.lon_deg() - self.lon_deg()).to_radians();
        let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
    }

    fn to_array(self) -> [u8; 8] {
        let mut out = [0u8; 8];
        out[..4].copy_from_slice(&self.lat_e7.to_be_bytes());
        out[4..].copy_from_slice(&self.lon_e7.to_be_bytes());
        out
    }

    fn from_array(bytes: [u8; 8]) -> Result<Self, PolError> {
        let lat = i32::from_be_bytes(bytes[..4].try_into().unwrap());
        let lon = i32::from_be_bytes(bytes[4..].try_into().unwrap());
        Self::from_e7(lat, lon)
    }
}

impl fmt::Debug for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Location({:.7}, {:.7})", self.lat_deg(), self.lon_deg())
    }
}

impl Encode for Location {
    fn encode_to(&self, out: &mut Vec<u8>) {
        put_i32(out, self.lat_e7);
        put_i32(out, self.lon_e7);
    }
}

impl Decode for Location {
    fn decode_from(reader: &mut Reader<'_>) -> Result<Self, WireError> {
        let lat = reader.i32()?;
        let lon = reader.i32()?;
        Location::from_e7(lat, lon).map_err(|_| WireError::InvalidValue("location out of range"))
    }
}

/// Local east/north meter grid anchored at a geodetic origin
/// (equirectangular projection, accurate at simulation scale).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalFrame {
    origin: Location,
}

impl LocalFrame {
    pub fn new(origin: Location) -> Self {
        LocalFrame { origin }
    }

    pub fn origin(&self) -> Location {
        self.origin
    }

    fn meters_per_degree_lat() -> f64 {
        EARTH_RADIUS_M.to_radians()
    }

    fn meters_per_degree_lon(&self) -> f64 {
        Self::meters_per_degree_lat() * self.origin.lat_deg().to_radians().cos()
    }

    pub fn to_location(&self, east_m: f64, north_m: f64) -> Result<Location, PolError> {
        Location::from_degrees(
            self.origin.lat_deg() + north_m / Self::meters_per_degree_lat(),
            self.origin.lon_deg() + east_m / self.meters_per_degree_lon(),
        )
    }

    pub fn to_local(&self, loc: &Location) -> (f64, f64) {
        (
            (loc.lon_deg() - self.origin.lon_deg()) * self.meters_per_degree_lon(),
            (loc.lat_deg() - self.origin.lat_deg()) * Self::meters_per_degree_lat(),
        )
    }
}

/// Symmetric key that unseals one request's location. Derived from the
/// one-use signing secret and the request nonce, so only the prover (and
/// whoever it hands the key to) can open the on-chain ciphertext.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct LocationKey([u8; 32]);

impl LocationKey {
    pub fn derive(sk: &SecretKey, nonce: &Nonce) -> Self {
        LocationKey(hash_parts(&[KEY_LABEL, sk.expose(), &nonce.0]).0)
    }

    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        LocationKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    fn keystream(&self) -> [u8; 8] {
        let digest = hash_parts(&[SEAL_LABEL, &self.0]);
        digest.0[..8].try_into().unwrap()
    }

    pub fn seal(&self, location: &Location) -> SealedLocation {
        let mut bytes = location.to_array();
        for (b, k) in bytes.iter_mut().zip(self.keystream()) {
            *b ^= k;
        }
        SealedLocation(bytes)
    }

    pub fn open(&self, sealed: &SealedLocation) -> Result<Location, PolError> {
        let mut bytes = sealed.0;
        for (b, k) in bytes.iter_mut().zip(self.keystream()) {
            *b ^= k;
        }
        Location::from_array(bytes)
    }
}

impl fmt::Debug for LocationKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("LocationKey(..)")
    }
}

impl Encode for LocationKey {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0);
    }
}

impl Decode for LocationKey {
    fn decode_from(reader: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(LocationKey(reader.array()?))
    }
}

/// Location ciphertext as carried in requests and stored on-chain.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct SealedLocation(pub [u8; 8]);

impl Encode for SealedLocation {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0);
    }
}

impl Decode for SealedLocation {
    fn decode_from(reader: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(SealedLocation(reader.array()?))
    }
}
