"""One result line per acceptance criterion, printed in the terminal summary."""

LINES = []


class Criterion:
    def __init__(self, cid):
        self.cid = cid
        self.checks = []

    def check(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))
        return ok

    def __enter__(self):
        return self

    def __exit__(self, typ, exc, tb):
        parts = [f"{n}={d}" if d else n for n, ok, d in self.checks]
        failed = [n for n, ok, _ in self.checks if not ok]
        if exc is not None:
            failed.append(f"error {typ.__name__}: {exc}")
        status = "FAIL" if failed else "PASS"
        line = f"{self.cid} {status}  " + "; ".join(parts)
        if failed:
            line += "  [failed: " + ", ".join(failed) + "]"
        LINES.append(line)
        print(line)
        if exc is None and failed:
            raise AssertionError(line)
        return False
