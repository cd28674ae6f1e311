"""Pass/fail record of the acceptance criteria, printed at the end of the run."""

RESULTS = {}


def record(key, ok, detail=""):
    RESULTS[key] = (bool(ok), detail)
    return ok


def lines():
    def order(k):
        num = "".join(ch for ch in k if ch.isdigit())
        return (int(num) if num else 0, k)

    return [f"criterion {k:>4}: {'PASS' if ok else 'FAIL'}  {detail}"
            for k, (ok, detail) in sorted(RESULTS.items(), key=lambda kv: order(kv[0]))]
