use super::{GradError, Graph, Tensor, Var};

/// One instruction of a [`Program`]. Operands index the program's value
/// slots: inputs occupy slots `0..n_inputs`, and instruction `k` writes
/// slot `n_inputs + k`.
#[derive(Clone, Debug, PartialEq)]
pub enum Instr {
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Tanh(usize),
    Relu(usize),
    Sigmoid(usize),
    Exp(usize),
    Log(usize),
    Sum(usize),
    Mean(usize),
    Slice(usize, usize, usize),
    Reshape(usize, Vec<usize>),
    Concat(Vec<usize>),
    /// Constant target tensor for a fused loss.
    Const(Tensor),
    SoftmaxCrossEntropy(usize, usize),
    SigmoidCrossEntropy(usize, usize),
    SquaredError(usize, usize),
}

/// A straight-line op sequence; the last slot is the result.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Program {
    pub instrs: Vec<Instr>,
}

impl Program {
    pub fn new(instrs: Vec<Instr>) -> Self {
        Self { instrs }
    }

    /// Evaluate the program on `g`, returning the root node.
    pub fn build(&self, g: &mut Graph, inputs: &[Var]) -> Result<Var, GradError> {
        let mut slots: Vec<Var> = inputs.to_vec();
        for (k, instr) in self.instrs.iter().enumerate() {
            let at = |i: usize| -> Result<Var, GradError> {
                slots.get(i).copied().ok_or_else(|| {
                    GradError::InvalidProgram(format!("instruction {k} reads undefined slot {i}"))
                })
            };
            let v = match instr {
                Instr::MatMul(a, b) => g.matmul(at(*a)?, at(*b)?)?,
                Instr::Add(a, b) => g.add(at(*a)?, at(*b)?)?,
                Instr::Sub(a, b) => g.sub(at(*a)?, at(*b)?)?,
                Instr::Mul(a, b) => g.mul(at(*a)?, at(*b)?)?,
                Instr::Scale(a, c) => g.scale(at(*a)?, *c)?,
                Instr::Tanh(a) => g.tanh(at(*a)?)?,
                Instr::Relu(a) => g.relu(at(*a)?)?,
                Instr::Sigmoid(a) => g.sigmoid(at(*a)?)?,
                Instr::Exp(a) => g.exp(at(*a)?)?,
                Instr::Log(a) => g.log(at(*a)?)?,
                Instr::Sum(a) => g.sum(at(*a)?)?,
                Instr::Mean(a) => g.mean(at(*a)?)?,
                Instr::Slice(a, s, e) => g.slice(at(*a)?, *s, *e)?,
                Instr::Reshape(a, shape) => g.reshape(at(*a)?, shape)?,
                Instr::Concat(parts) => {
                    let vars = parts.iter().map(|p| at(*p)).collect::<Result<Vec<_>, _>>()?;
                    g.concat(&vars)?
                }
                Instr::Const(t) => g.constant(t.clone()),
                Instr::SoftmaxCrossEntropy(a, b) => g.softmax_cross_entropy(at(*a)?, at(*b)?)?,
                Instr::SigmoidCrossEntropy(a, b) => g.sigmoid_cross_entropy(at(*a)?, at(*b)?)?,
                Instr::SquaredError(a, b) => g.squared_error(at(*a)?, at(*b)?)?,
            };
            slots.push(v);
        }
        slots
            .last()
            .copied()
            .ok_or_else(|| GradError::InvalidProgram("program has no inputs or instructions".into()))
    }

    /// Build on a fresh graph from tensor inputs (all differentiable).
    pub fn evaluate(&self, inputs: &[Tensor]) -> Result<(Graph, Vec<Var>, Var), GradError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
        let root = self.build(&mut g, &vars)?;
        Ok((g, vars, root))
    }
}
