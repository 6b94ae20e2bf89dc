# The tensor engine: dense arrays, a gradient tape, and gradient checking.
#
# Everything the network needs is a handful of ops; each records how to
# push gradients backwards, and a Tape replays them in reverse.

import numpy as np

from amnet.tensor import (
    Tape, Tensor, cross_entropy, grad_check, matmul, sigmoid, softmax_masked,
    sum_all, tanh,
)

rng = np.random.default_rng(0)

print("-- forward ops --")
a = Tensor([[1.0, 2.0]])
b = Tensor([[3.0], [4.0]])
print("matmul [[1,2]]@[[3],[4]] ->", matmul(a, b).data)

logits = Tensor([2.0, 2.0, -1000.0, 2.0])
mask = np.array([1, 1, 1, 0])
print("masked softmax ->", softmax_masked(logits, mask).data)
print("cross entropy of uniform 4-way logits ->",
      float(cross_entropy(Tensor(np.zeros(4)), 1).data), "=~ ln 4")

print()
print("-- reverse mode --")
x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
w = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
with Tape() as tape:
    loss = sum_all(tanh(matmul(x, w)))
tape.backward(loss)
print("loss:", float(loss.data))
print("grad shapes:", x.grad.shape, w.grad.shape)

print()
print("-- checking gradients against central differences --")
for name, f in [
    ("sum(sigmoid(x))", lambda t: sum_all(sigmoid(t))),
    ("sum(tanh(x) @ w)", lambda t: sum_all(matmul(tanh(t), w))),
]:
    t = Tensor(rng.normal(size=(4, 4)), requires_grad=True)
    err = grad_check(f, [t])
    print(f"{name:<20} max relative error {err:.2e}")
