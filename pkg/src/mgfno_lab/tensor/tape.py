"""Define-by-run reverse-mode differentiation.

A :class:`Tape` is created for every forward pass. Parameters are registered
on it under stable integer ids, every differentiable primitive appends a node
holding its vector-Jacobian product, and :meth:`Tape.backward` walks the nodes
in reverse once.

Complex intermediates carry gradients in the ``dL/dRe + i dL/dIm`` convention,
so the adjoint of ``z = a * b`` is ``g * conj(b)`` and real leaves simply keep
the real part of whatever reaches them.
"""

import numpy as np

__all__ = ["Tensor", "Tape", "TapeError", "as_array"]


class TapeError(RuntimeError):
    pass


class Tensor:
    """Immutable array value, optionally tracked on a tape.

    ``data`` is a float64 or complex128 ndarray. A tensor with ``tape is None``
    is a constant.
    """

    __slots__ = ("data", "tape", "node")

    def __init__(self, data, tape=None, node=None):
        arr = np.asarray(data)
        if arr.dtype.kind == "c":
            arr = arr.astype(np.complex128, copy=False)
        else:
            arr = arr.astype(np.float64, copy=False)
        if arr.flags.writeable and arr.base is None:
            arr.flags.writeable = False
        self.data = arr
        self.tape = tape
        self.node = node

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def is_complex(self):
        return self.data.dtype.kind == "c"

    @property
    def tracked(self):
        return self.tape is not None

    def numpy(self):
        return np.array(self.data)

    def __repr__(self):
        kind = "complex" if self.is_complex else "real"
        return f"Tensor(shape={self.shape}, {kind}, tracked={self.tracked})"

    # operator sugar; the primitives live in ``ops``
    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops

        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops

        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)

    def __getitem__(self, key):
        from . import ops

        return ops.getitem(self, key)


def as_array(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x)


class Tape:
    """Record of primitive operations for one forward pass."""

    def __init__(self):
        self._vjps = []
        self._parents = []
        self._shapes = []
        self._complex = []
        self._params = {}
        self._done = False

    def __len__(self):
        return len(self._vjps)

    def _new_node(self, value, parents, vjp):
        if self._done:
            raise TapeError("tape already consumed by backward(); record a new forward pass")
        self._vjps.append(vjp)
        self._parents.append(parents)
        self._shapes.append(value.shape)
        self._complex.append(value.dtype.kind == "c")
        return len(self._vjps) - 1

    def parameter(self, value, pid):
        """Register a trainable leaf under the integer id ``pid``."""
        pid = int(pid)
        if pid in self._params:
            raise TapeError(f"parameter id {pid} registered twice")
        t = Tensor(np.array(value))
        t.tape = self
        t.node = self._new_node(t.data, (), None)
        self._params[pid] = t.node
        return t

    def record(self, value, inputs, vjp):
        """Append a primitive result.

        ``vjp(g)`` must return one gradient (or ``None``) per entry of
        ``inputs``. Untracked inputs are skipped; if no input is tracked on
        this tape the value comes back as a constant.
        """
        parents = []
        for x in inputs:
            if isinstance(x, Tensor) and x.tape is not None:
                if x.tape is not self:
                    raise TapeError("inputs recorded on different tapes")
                parents.append(x.node)
            else:
                parents.append(None)
        if all(p is None for p in parents):
            return Tensor(value)
        node = self._new_node(np.asarray(value), tuple(parents), vjp)
        return Tensor(value, self, node)

    @property
    def parameter_ids(self):
        return list(self._params)

    def backward(self, loss):
        """Gradients of a scalar ``loss`` for every registered parameter.

        Returns ``{pid: ndarray}``; parameters the loss does not depend on get
        zeros of their own shape.
        """
        if self._done:
            raise TapeError("backward() already ran on this tape")
        if not isinstance(loss, Tensor) or loss.tape is not self:
            raise TapeError("loss is not recorded on this tape")
        if loss.data.size != 1:
            raise TapeError(f"loss must be scalar, got shape {loss.shape}")
        if loss.is_complex:
            raise TapeError("loss must be real")
        self._done = True
        grads = [None] * len(self._vjps)
        grads[loss.node] = np.ones(loss.shape)
        for i in range(loss.node, -1, -1):
            g = grads[i]
            vjp = self._vjps[i]
            if g is None or vjp is None:
                continue
            parents = self._parents[i]
            outs = vjp(g)
            for p, gp in zip(parents, outs):
                if p is None or gp is None:
                    continue
                if not self._complex[p] and np.iscomplexobj(gp):
                    gp = gp.real
                if gp.shape != self._shapes[p]:
                    gp = np.broadcast_to(gp, self._shapes[p])
                grads[p] = gp if grads[p] is None else grads[p] + gp
            grads[i] = None
        out = {}
        for pid, node in self._params.items():
            g = grads[node]
            out[pid] = np.zeros(self._shapes[node], dtype=np.complex128 if self._complex[node] else np.float64) if g is None else np.array(g)
        return out
