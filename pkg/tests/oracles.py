"""Independent reference models shared by the tests."""

from hevote.backend import BackendParams


class LevelOracle:
    """Scalar replay of a backend trace: tracks levels and counts bootstraps."""

    def __init__(self, params: BackendParams):
        self.fresh = params.effective_depth
        self.reserve = params.reserve_level
        self.levels: dict[int, int] = {}
        self.bootstraps = 0

    def _refresh_if(self, lvl: int, need: int) -> int:
        if lvl - need < self.reserve:
            self.bootstraps += 1
            return self.fresh
        return lvl

    def replay(self, trace) -> int:
        for op, inputs, out, arg in trace:
            lv = [self.levels[i] for i in inputs]
            if op == "encrypt":
                res = self.fresh
            elif op == "bootstrap":
                self.bootstraps += 1
                res = self.fresh
            elif op == "ensure":
                res = self._refresh_if(lv[0], arg)
            elif op in ("add", "sub"):
                res = min(lv)
            elif op in ("add_plain", "rotate"):
                res = lv[0]
            elif op == "mul_plain":
                res = self._refresh_if(lv[0], 1) - 1
            elif op == "mul":
                a = self._refresh_if(lv[0], 1)
                b = a if inputs[0] == inputs[1] else self._refresh_if(lv[1], 1)
                res = min(a, b) - 1
            else:
                raise AssertionError(f"unknown op {op}")
            self.levels[out] = res
        return self.bootstraps
