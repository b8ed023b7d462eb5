//! Read-only profiles of the five post-quantum algorithm families and the
//! recommended schemes per mobile-network domain.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Hash,
    Isogeny,
    Lattice,
    Code,
    Multivariate,
}

impl Family {
    pub const ALL: [Family; 5] =
        [Family::Hash, Family::Isogeny, Family::Lattice, Family::Code, Family::Multivariate];

    pub fn name(self) -> &'static str {
        match self {
            Family::Hash => "Hash based",
            Family::Isogeny => "Isogeny based",
            Family::Lattice => "Lattice based",
            Family::Code => "Code based",
            Family::Multivariate => "Multivariate",
        }
    }
}

/// Three-step ordinal scale. Columns name the ends differently
/// (Slow/Fast for performance, Small/Large for key size).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    Low,
    Moderate,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    SecurityLevel,
    Performance,
    KeySize,
    ImplementationComplexity,
    MobileSuitability,
}

impl Column {
    pub const ALL: [Column; 5] = [
        Column::SecurityLevel,
        Column::Performance,
        Column::KeySize,
        Column::ImplementationComplexity,
        Column::MobileSuitability,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Column::SecurityLevel => "Security level",
            Column::Performance => "Performance",
            Column::KeySize => "Key size",
            Column::ImplementationComplexity => "Implementation complexity",
            Column::MobileSuitability => "Suitability for mobile networks",
        }
    }

    pub fn label(self, level: Level) -> &'static str {
        match (self, level) {
            (_, Level::Moderate) => "Moderate",
            (Column::Performance, Level::Low) => "Slow",
            (Column::Performance, Level::High) => "Fast",
            (Column::KeySize, Level::Low) => "Small",
            (Column::KeySize, Level::High) => "Large",
            (_, Level::Low) => "Low",
            (_, Level::High) => "High",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FamilyProfile {
    pub family: Family,
    pub security_level: Level,
    pub performance: Level,
    pub key_size: Level,
    pub impl_complexity: Level,
    pub mobile_suitability: Level,
}

impl FamilyProfile {
    pub fn get(&self, column: Column) -> Level {
        match column {
            Column::SecurityLevel => self.security_level,
            Column::Performance => self.performance,
            Column::KeySize => self.key_size,
            Column::ImplementationComplexity => self.impl_complexity,
            Column::MobileSuitability => self.mobile_suitability,
        }
    }

    pub fn label(&self, column: Column) -> &'static str {
        column.label(self.get(column))
    }
}

use Level::{High, Low, Moderate};

const PROFILES: [FamilyProfile; 5] = [
    FamilyProfile {
        family: Family::Hash,
        security_level: High,
        performance: Moderate,
        key_size: Low,
        impl_complexity: Moderate,
        mobile_suitability: Moderate,
    },
    FamilyProfile {
        family: Family::Isogeny,
        security_level: Moderate,
        performance: Low,
        key_size: Low,
        impl_complexity: High,
        mobile_suitability: Low,
    },
    FamilyProfile {
        family: Family::Lattice,
        security_level: High,
        performance: Moderate,
        key_size: Moderate,
        impl_complexity: Moderate,
        mobile_suitability: Moderate,
    },
    FamilyProfile {
        family: Family::Code,
        security_level: High,
        performance: High,
        key_size: Moderate,
        impl_complexity: Moderate,
        mobile_suitability: High,
    },
    FamilyProfile {
        family: Family::Multivariate,
        security_level: Moderate,
        performance: Low,
        key_size: High,
        impl_complexity: High,
        mobile_suitability: Low,
    },
];

pub fn family_suitability(family: Family) -> FamilyProfile {
    PROFILES[family as usize]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    UserAuthSignaling,
    DataEncryptionPrivacy,
    NetworkMgmtInfra,
    KeyManagement,
}

impl Domain {
    pub const ALL: [Domain; 4] = [
        Domain::UserAuthSignaling,
        Domain::DataEncryptionPrivacy,
        Domain::NetworkMgmtInfra,
        Domain::KeyManagement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Domain::UserAuthSignaling => "User authentication and signaling security",
            Domain::DataEncryptionPrivacy => "Data encryption and privacy preservation",
            Domain::NetworkMgmtInfra => "Network management and infrastructure security",
            Domain::KeyManagement => "Key management",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Schemes in ranked order (Scheme 1 first).
pub fn recommend_schemes(domain: Domain) -> [&'static str; 4] {
    match domain {
        Domain::UserAuthSignaling => ["Crystals-DILITHIUM", "Falcon", "Rainbow", "SIKE"],
        Domain::DataEncryptionPrivacy => ["Kyber", "NTRU", "BIKE", "HQC"],
        Domain::NetworkMgmtInfra => ["Kyber", "NTRU", "Classic McEliece", "SIKE"],
        Domain::KeyManagement => ["Crystals-KYBER", "NTRU", "SABER", "BIKE"],
    }
}
