"""Construct the run report

A report is a plain dictionary, written as JSON with sorted keys:

{
  "role": "seller" | "buyer",
  "outcome": "Closed" | "Aborted(step, reason)",
  "state": "string",
  "config": {negotiated session parameters},
  "timings": {"step1": seconds, ..., "verification": seconds},
  "peak_memory_kb": integer,
  "traffic": {
    "steps": {"step1": {"S->B": bytes, "B->S": bytes}, ...},
    "totals": {"S->B": bytes, "B->S": bytes}
  },
  "leaks": {leak ledger report},
  "statistics": {Seller graph statistics, if received},
  "intersection_size": integer,
  "entropy": [{"metric": ..., "h_buyer": ..., "gain": ...}, ...],
  "parts_received": [{"index": integer, "statements": integer}, ...],
  "verification": {verification report}
}
"""
import json
import resource

from kgtrade import leakledger
from kgtrade.leakledger import Direction


def peak_memory_kb():
    """Peak resident set size of this process, in KiB (Linux units)"""
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss


def build(result, plain_baseline=None):
    """Summarize one party's session

    Parameters
    ----------
    result : protocol.SessionResult
    plain_baseline : net.TrafficMeter, optional
        Traffic of the same exchange without cryptography. If given,
        the report includes the overhead ratio of the private protocol.

    Returns
    -------
    dict
    """
    outcome = result.outcome
    output = {
        "role": result.role,
        "outcome": str(outcome),
        "state": outcome.state.value,
        "config": result.config.negotiable(),
        "timings": {step: round(t, 6) for step, t in result.timings.items()},
        "peak_memory_kb": peak_memory_kb(),
        "traffic": {
            "steps": result.traffic.as_dict(),
            "totals": {d.value: result.traffic.total(d) for d in Direction},
        },
        "leaks": leakledger.report(result.ledger),
    }
    if outcome.aborted:
        output["aborted"] = {"step": outcome.step, "reason": outcome.reason}
    if result.statistics is not None:
        output["statistics"] = result.statistics.as_dict()

    findings = result.findings
    if findings is not None:
        if findings.intersection is not None:
            output["intersection_size"] = len(findings.intersection)
            if findings.intersection.filter_cardinality_estimate is not None:
                output["seller_size_estimate"] = round(
                    findings.intersection.filter_cardinality_estimate, 3)
        output["entropy"] = [r.as_dict() for r in findings.entropy]
        output["parts_received"] = [
            {"index": p.index, "statements": len(p.statements)}
            for p in findings.parts]
    if result.verification is not None:
        output["verification"] = result.verification.as_dict()

    if plain_baseline is not None:
        secure = result.traffic.total()
        plain = plain_baseline.total()
        output["plain_baseline"] = {
            "bytes": plain,
            "overhead_ratio": secure / plain if plain else None,
        }
    return output


def dumps(report):
    return json.dumps(report, sort_keys=True, indent=2)


def write(report, path):
    with open(path, 'w') as _fout:
        _fout.write(dumps(report))
        _fout.write('\n')
