use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

macro_rules! real_vector {
    ($(#[$meta:meta])* $name:ident, $what:literal) => {
        $(#[$meta])*
        #[derive(Clone, Debug, Default, PartialEq)]
        pub struct $name<T = f64>(Vec<T>);

        impl<T: Scalar> $name<T> {
            pub fn zeros(len: usize) -> Self {
                Self(vec![T::zero(); len])
            }

            pub fn filled(len: usize, value: T) -> Self {
                Self(vec![value; len])
            }

            pub fn into_vec(self) -> Vec<T> {
                self.0
            }

            pub fn max_norm(&self) -> T {
                crate::scalar::max_norm(&self.0)
            }

            /// Checks the length and that every entry is finite.
            pub fn check(&self, len: usize) -> Result<()> {
                if self.0.len() != len {
                    return Err(Error::invalid(format!(
                        concat!($what, " has length {}, expected {}"),
                        self.0.len(),
                        len
                    )));
                }
                if let Some(i) = self.0.iter().position(|x| !x.is_finite()) {
                    return Err(Error::invalid(format!(
                        concat!($what, " entry {} is not finite"),
                        i
                    )));
                }
                Ok(())
            }
        }

        impl<T> From<Vec<T>> for $name<T> {
            fn from(v: Vec<T>) -> Self {
                Self(v)
            }
        }

        impl<T> FromIterator<T> for $name<T> {
            fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
                Self(iter.into_iter().collect())
            }
        }

        impl<T> Deref for $name<T> {
            type Target = [T];
            fn deref(&self) -> &[T] {
                &self.0
            }
        }

        impl<T> DerefMut for $name<T> {
            fn deref_mut(&mut self) -> &mut [T] {
                &mut self.0
            }
        }
    };
}

real_vector!(
    /// A value vector, one entry per state.
    Values,
    "value vector"
);
real_vector!(
    /// A vector indexed by state-action pair in instance order.
    QValues,
    "state-action vector"
);

/// One action per state, stored as an index into that state's action list.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Policy(Vec<usize>);

impl Policy {
    /// The policy choosing action 0 everywhere.
    pub fn first_actions(num_states: usize) -> Self {
        Policy(vec![0; num_states])
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }
}

impl From<Vec<usize>> for Policy {
    fn from(v: Vec<usize>) -> Self {
        Policy(v)
    }
}

impl Deref for Policy {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl DerefMut for Policy {
    fn deref_mut(&mut self) -> &mut [usize] {
        &mut self.0
    }
}
