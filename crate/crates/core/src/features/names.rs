use std::ops::Index;

/// Number of geometric features per point.
pub const N_FEATURES: usize = 21;

/// Canonical feature names. Feature tables, model importances and reports all
/// use this order.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "linearity",
    "planarity",
    "sphericity",
    "omnivariance",
    "anisotropy",
    "eigenentropy",
    "sum_eigenvalues",
    "change_curvature",
    "verticality",
    "Z_vals",
    "delta_z",
    "std_z",
    "radius_3D",
    "density",
    "radius_2D",
    "density_2D",
    "sum_eigenvalues_2D",
    "ratio_eigenvalues_2D",
    "frequency_acc_map",
    "delta_z_acc_map",
    "std_z_acc_map",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Feature {
    Linearity,
    Planarity,
    Sphericity,
    Omnivariance,
    Anisotropy,
    Eigenentropy,
    SumEigenvalues,
    ChangeCurvature,
    Verticality,
    ZVals,
    DeltaZ,
    StdZ,
    Radius3d,
    Density,
    Radius2d,
    Density2d,
    SumEigenvalues2d,
    RatioEigenvalues2d,
    FrequencyAccMap,
    DeltaZAccMap,
    StdZAccMap,
}

impl Feature {
    pub const ALL: [Feature; N_FEATURES] = [
        Feature::Linearity,
        Feature::Planarity,
        Feature::Sphericity,
        Feature::Omnivariance,
        Feature::Anisotropy,
        Feature::Eigenentropy,
        Feature::SumEigenvalues,
        Feature::ChangeCurvature,
        Feature::Verticality,
        Feature::ZVals,
        Feature::DeltaZ,
        Feature::StdZ,
        Feature::Radius3d,
        Feature::Density,
        Feature::Radius2d,
        Feature::Density2d,
        Feature::SumEigenvalues2d,
        Feature::RatioEigenvalues2d,
        Feature::FrequencyAccMap,
        Feature::DeltaZAccMap,
        Feature::StdZAccMap,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        FEATURE_NAMES[self.index()]
    }

    pub fn from_name(name: &str) -> Option<Feature> {
        FEATURE_NAMES
            .iter()
            .position(|&n| n == name)
            .map(|i| Feature::ALL[i])
    }
}

/// The 21 descriptors of one point plus the neighborhood size they were
/// computed at.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureVector<T> {
    pub values: [T; N_FEATURES],
    pub opt_n: usize,
}

impl<T> Index<Feature> for FeatureVector<T> {
    type Output = T;
    fn index(&self, f: Feature) -> &T {
        &self.values[f.index()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enum_matches_names() {
        for (i, f) in Feature::ALL.iter().enumerate() {
            assert_eq!(f.index(), i);
            assert_eq!(Feature::from_name(f.name()), Some(*f));
        }
        assert_eq!(Feature::ZVals.name(), "Z_vals");
        assert_eq!(Feature::from_name("nope"), None);
    }
}
