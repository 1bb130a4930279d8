use rand::Rng;

use crate::env::{dirichlet_flat, TabularMdp};
use crate::error::{CoreError, Result};

/// Finite candidate sets for the utility and the transition kernel.
///
/// All candidates share the skeleton's tree and prompt distribution. The
/// truth markers are for evaluation only; learners never read them.
#[derive(Clone, Debug)]
pub struct ModelClass {
    skeleton: TabularMdp,
    utilities: Vec<Vec<f64>>,
    kernels: Vec<Vec<f64>>,
    kernel_models: Vec<TabularMdp>,
    truth_utility: Option<usize>,
    truth_kernel: Option<usize>,
}

impl ModelClass {
    /// Builds a class from explicit tables. Utility tables are indexed by sa
    /// slot, kernels by sao slot; rows are normalized.
    pub fn new(
        skeleton: &TabularMdp,
        utilities: Vec<Vec<f64>>,
        kernels: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if utilities.is_empty() || kernels.is_empty() {
            return Err(CoreError::Config(
                "model class needs at least one utility and one kernel".into(),
            ));
        }
        let mut checked_u = Vec::with_capacity(utilities.len());
        for u in utilities {
            checked_u.push(skeleton.with_utility(u)?.utility_table().to_vec());
        }
        let kernel_models = kernels
            .iter()
            .map(|k| skeleton.with_kernel(k))
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelClass {
            skeleton: skeleton.clone(),
            utilities: checked_u,
            kernels: kernel_models.iter().map(|m| m.kernel().to_vec()).collect(),
            kernel_models,
            truth_utility: None,
            truth_kernel: None,
        })
    }

    /// The one-model class `{u*} × {P*}`.
    pub fn singleton(truth: &TabularMdp) -> Self {
        ModelClass {
            skeleton: truth.clone(),
            utilities: vec![truth.utility_table().to_vec()],
            kernels: vec![truth.kernel().to_vec()],
            kernel_models: vec![truth.clone()],
            truth_utility: Some(0),
            truth_kernel: Some(0),
        }
    }

    /// `n_utilities × n_kernels` class around `truth`. Alternatives are
    /// uniform utility tables on `[0, B]` and flat-Dirichlet kernels; the
    /// truth lands at a random index, never 0 when there is an alternative.
    pub fn realizable<R: Rng + ?Sized>(
        truth: &TabularMdp,
        n_utilities: usize,
        n_kernels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if n_utilities == 0 || n_kernels == 0 {
            return Err(CoreError::Config("model class sizes must be >= 1".into()));
        }
        let tree = truth.tree();
        let iu = if n_utilities > 1 {
            rng.random_range(1..n_utilities)
        } else {
            0
        };
        let ip = if n_kernels > 1 {
            rng.random_range(1..n_kernels)
        } else {
            0
        };
        let mut utilities = Vec::with_capacity(n_utilities);
        for i in 0..n_utilities {
            if i == iu {
                utilities.push(truth.utility_table().to_vec());
                continue;
            }
            let mut table = vec![0.0; tree.num_sa()];
            for sa in tree.terminal_sa() {
                table[sa] = rng.random::<f64>() * truth.bound();
            }
            utilities.push(table);
        }
        let mut kernels = Vec::with_capacity(n_kernels);
        for i in 0..n_kernels {
            if i == ip {
                kernels.push(truth.kernel().to_vec());
                continue;
            }
            let mut k = vec![0.0; tree.num_sao()];
            for sa in 0..tree.num_sa() {
                let range = tree.obs_range(sa);
                if !range.is_empty() {
                    let row = dirichlet_flat(range.len(), rng);
                    k[range].copy_from_slice(&row);
                }
            }
            kernels.push(k);
        }
        let mut class = ModelClass::new(truth, utilities, kernels)?;
        class.truth_utility = Some(iu);
        class.truth_kernel = Some(ip);
        Ok(class)
    }

    /// Marks which candidates are the truth.
    pub fn with_truth(mut self, utility: usize, kernel: usize) -> Result<Self> {
        if utility >= self.utilities.len() || kernel >= self.kernels.len() {
            return Err(CoreError::Config("truth index outside the class".into()));
        }
        self.truth_utility = Some(utility);
        self.truth_kernel = Some(kernel);
        Ok(self)
    }

    pub fn skeleton(&self) -> &TabularMdp {
        &self.skeleton
    }

    pub fn num_utilities(&self) -> usize {
        self.utilities.len()
    }

    pub fn num_kernels(&self) -> usize {
        self.kernels.len()
    }

    pub fn utility(&self, i: usize) -> &[f64] {
        &self.utilities[i]
    }

    pub fn utilities(&self) -> &[Vec<f64>] {
        &self.utilities
    }

    pub fn kernel(&self, i: usize) -> &[f64] {
        &self.kernels[i]
    }

    pub fn kernels(&self) -> &[Vec<f64>] {
        &self.kernels
    }

    pub fn truth_utility(&self) -> Option<usize> {
        self.truth_utility
    }

    pub fn truth_kernel(&self) -> Option<usize> {
        self.truth_kernel
    }

    /// The skeleton under kernel candidate `p`.
    pub fn kernel_model(&self, p: usize) -> &TabularMdp {
        &self.kernel_models[p]
    }

    /// The environment with candidate utility `u` and kernel `p`.
    pub fn model(&self, u: usize, p: usize) -> Result<TabularMdp> {
        if u >= self.utilities.len() || p >= self.kernels.len() {
            return Err(CoreError::Config(format!(
                "candidate ({u}, {p}) outside the class"
            )));
        }
        self.kernel_models[p].with_utility(self.utilities[u].clone())
    }
}
