"""Text-generation backends: the interface, a deterministic seeded mock, and
a generic chat-completion HTTP client.

Prompts carry machine-readable header lines (TASK:, PATH:, ...) that the
mock routes on; a real model simply reads the same text as instructions.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import urllib.request
from dataclasses import dataclass
from typing import Optional, Protocol

from cmdsift.synthgen import mockdata

logger = logging.getLogger(__name__)


class BackendError(RuntimeError):
    """The backend failed to produce a usable response."""


class GenerationBackend(Protocol):
    def complete(self, prompt: str) -> str: ...

    def judge(self, question: str) -> tuple[bool, str]: ...


def parse_headers(prompt: str) -> dict[str, str]:
    headers: dict[str, str] = {}
    for line in prompt.splitlines():
        m = re.match(r"^([A-Z_]+):\s*(.*)$", line)
        if m:
            headers[m.group(1)] = m.group(2).strip()
    return headers


def _norm(name: str) -> str:
    return name.strip().lower()


class MockBackend:
    """Deterministic offline backend keyed by prompt content and a seed."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.calls = 0

    def _rng(self, prompt: str) -> random.Random:
        digest = hashlib.blake2b(
            f"{self.seed}\x1f{prompt}".encode("utf-8"), digest_size=8
        ).digest()
        return random.Random(int.from_bytes(digest, "little"))

    # -- routing helpers --

    @staticmethod
    def _domain(headers: dict[str, str]) -> str:
        text = (headers.get("STRATEGY", "") + " " + headers.get("INSTRUCTION", "")).lower()
        if "revers" in text or "shell" in text:
            return "reverse_shell"
        if "lotl" in text or "living" in text or "pre-installed" in text:
            return "lotl"
        if "hack" in text or "tool" in text:
            return "hacking_tools"
        return "reverse_shell"

    @staticmethod
    def _is_benign(headers: dict[str, str]) -> bool:
        if headers.get("LABEL"):
            return headers["LABEL"] == "negative"
        return "benign" in headers.get("STRATEGY", "").lower()

    def _taxonomy_bank(self, headers: dict[str, str]) -> dict[tuple[str, ...], list[str]]:
        domain = self._domain(headers)
        side = "benign" if self._is_benign(headers) else "malicious"
        return mockdata.TAXONOMIES[f"{domain}_{side}"]

    @staticmethod
    def _subpath(headers: dict[str, str]) -> tuple[str, ...]:
        # PATH is "Root > Child > ..."; bank keys are relative to the root.
        parts = [_norm(p) for p in headers.get("PATH", "").split(">") if p.strip()]
        return tuple(parts[1:])

    def complete(self, prompt: str) -> str:
        self.calls += 1
        headers = parse_headers(prompt)
        task = headers.get("TASK", "")
        if task == "propose_children":
            return self._propose_children(headers, prompt)
        if task == "critique_children":
            return self._critique_children(headers)
        if task == "plan_next_level":
            return self._plan_next_level(headers)
        if task == "expand_scenarios":
            return self._expand_scenarios(headers, prompt)
        if task == "generate_sample":
            return self._generate_sample(headers, prompt)
        if task == "draft_plan":
            return self._draft_plan(headers)
        raise BackendError(f"mock backend cannot handle task {task!r}")

    def _propose_children(self, headers: dict[str, str], prompt: str) -> str:
        bank = self._taxonomy_bank(headers)
        children = bank.get(self._subpath(headers))
        if not children:
            return ""
        # Proposal sets are intentionally partial so the union+critic loop has
        # work to do: each proposal drops a deterministic subset.
        rng = self._rng(prompt)
        keep = [c for c in children if len(children) <= 2 or rng.random() > 0.25]
        return "\n".join(keep if keep else children[:1])

    def _critique_children(self, headers: dict[str, str]) -> str:
        domain = self._domain(headers)
        side = "benign" if self._is_benign(headers) else "malicious"
        sub = self._subpath(headers)
        bank_key = f"{domain}_{side}"
        authoritative = list(mockdata.TAXONOMIES[bank_key].get(sub, []))
        authoritative += mockdata.CRITIC_ADDITIONS.get((bank_key, sub), [])
        current = [_norm(c) for c in headers.get("CHILDREN", "").split(",") if c.strip()]
        known = {_norm(a) for a in authoritative}
        missing = [a for a in authoritative if _norm(a) not in current]
        extra = [c for c in current if c not in known]
        if not missing and not extra:
            return "COMPLETE"
        parts = []
        if missing:
            parts.append("This is incomplete; it's missing: " + ", ".join(missing))
        if extra:
            parts.append("remove: " + ", ".join(extra))
        return "\n".join(parts)

    def _plan_next_level(self, headers: dict[str, str]) -> str:
        bank = self._taxonomy_bank(headers)
        sub = self._subpath(headers)
        children = [_norm(c) for c in headers.get("CHILDREN", "").split(",") if c.strip()]
        if any(bank.get(sub + (c,)) for c in children):
            return (
                "For each node, categorize by the specific features or modules used."
            )
        return "STOP"

    def _expand_scenarios(self, headers: dict[str, str], prompt: str) -> str:
        k = int(headers.get("COUNT", "3"))
        path = headers.get("PATH", "").lower()
        bank: Optional[list[str]] = None
        for key, scenarios in mockdata.SCENARIOS.items():
            if key != "_benign" and key in path:
                bank = scenarios
                break
        if bank is None:
            bank = mockdata.SCENARIOS["_benign"]
        rng = self._rng(prompt)
        lines = []
        for i in range(k):
            base = bank[i % len(bank)]
            if i >= len(bank):
                base = f"{base} (variation {rng.randint(2, 99)})"
            lines.append(f"{i + 1}. {base}")
        return "\n".join(lines)

    def _command_bank(self, headers: dict[str, str]) -> list[str]:
        domain = self._domain(headers)
        path = headers.get("PATH", "").lower()
        benign = self._is_benign(headers)
        if benign:
            prefixes = {
                "reverse_shell": "benign/",
                "hacking_tools": "hacking_tools_benign/",
                "lotl": "lotl_benign/",
            }
            prefix = prefixes[domain]
        else:
            prefix = {"reverse_shell": "reverse_shell/", "hacking_tools": "hacking_tools/",
                      "lotl": "lotl/"}[domain]
        best: Optional[list[str]] = None
        best_len = 0
        for key, bank in mockdata.COMMANDS.items():
            if not key.startswith(prefix):
                continue
            tail = key.split("/", 1)[1]
            if tail in path and len(tail) > best_len:
                best, best_len = bank, len(tail)
        if best:
            return best
        # Fall back to any bank on the right side of the label.
        candidates = sorted(k for k in mockdata.COMMANDS if k.startswith(prefix))
        if not candidates:
            raise BackendError(f"no command templates for {prefix!r}")
        digest = hashlib.blake2b(path.encode(), digest_size=4).digest()
        return mockdata.COMMANDS[candidates[int.from_bytes(digest, "little") % len(candidates)]]

    def _generate_sample(self, headers: dict[str, str], prompt: str) -> str:
        rng = self._rng(prompt)
        bank = self._command_bank(headers)
        template = rng.choice(bank)
        scenario = headers.get("SCENARIO", "")
        port = 8443 if "8443" in scenario else rng.choice([53, 80, 443, 1337, 4444, 8080, 9001])
        command = template.format(
            ip=f"{rng.randint(1, 223)}.{rng.randint(0, 255)}.{rng.randint(0, 255)}.{rng.randint(1, 254)}",
            port=port,
            host=rng.choice(mockdata.FILL_HOSTS),
            user=rng.choice(mockdata.FILL_USERS),
            file=rng.choice(mockdata.FILL_FILES),
            dir=rng.choice(mockdata.FILL_DIRS),
            num=rng.randint(1, 30),
        )
        if self._is_benign(headers):
            cls, score = "benign", 90
            rationale = "Routine administrative activity with no attack indicators."
        else:
            cls = mockdata.ATTACK_CLASSES[self._domain(headers)]
            score = 95
            rationale = (
                "The command wires command execution to an attacker-reachable "
                "channel, matching the scenario."
            )
        return (
            f"COMMAND: {command}\n"
            f"CLASS: {cls}\n"
            f"SCORE: {score}\n"
            f"RATIONALE: {rationale}"
        )

    def _draft_plan(self, headers: dict[str, str]) -> str:
        from cmdsift.fixtures import data_path

        objective = headers.get("OBJECTIVE", "").lower()
        name = "reverse_shell"
        if "hack" in objective or "tool" in objective:
            name = "hacking_tools"
        elif "lotl" in objective or "living" in objective or "land" in objective:
            name = "lotl"
        return data_path("plans", f"{name}.plan").read_text(encoding="utf-8")

    # -- judging --

    _ATTACK_HINTS = re.compile(
        r"(/dev/(tcp|udp)/|>&\s*/dev|\bexec\b|EXEC:|pty|subprocess|IO::Socket|socket\s*\(|"
        r"\bsocket\b.*connect|connect.*socket|-e\s+/bin/|\|&|getline|urlcache|scrobj|"
        r"/inet/tcp/|\.hta|\.lnk|\.sct|hydra\s+-|nmap\s+-|sqlmap\s+-|john\s+--|dirb\s+http|"
        r"-display\s+\S+:\d|process\s+call\s+create|bitsadmin\s+/transfer|schtasks\s+/create|"
        r"\|\s*bash\b|rundll32.*javascript|/p:Task=Inline|mshta\s+http|mkfifo)",
        re.IGNORECASE,
    )
    _STRONG_ATTACK = re.compile(
        r"(-e\s+/bin/(ba)?sh|EXEC:'/bin/(ba)?sh|sh\s*<&|>&\s*/dev/(tcp|udp)|"
        r"pty\.spawn\(['\"]/?(bin/)?sh|\|\s*bash\s*-|process\s+call\s+create|"
        r"urlcache|scrobj|mshta\s+http|rundll32.*javascript|schtasks\s+/create)",
        re.IGNORECASE,
    )

    def _plausible(self, command: str, classification: str) -> bool:
        if classification.lower() == "benign":
            # Benign listeners/port-checks may contain EXEC:'cat' or tool
            # names; only attack wiring makes a benign claim implausible.
            return not self._STRONG_ATTACK.search(command)
        return bool(self._ATTACK_HINTS.search(command))

    def judge(self, question: str) -> tuple[bool, str]:
        self.calls += 1
        m = re.search(
            r"Given the command, (.*), and its classification as (\S+),", question, re.DOTALL
        )
        if not m:
            raise BackendError("mock judge cannot find command/classification in question")
        command, classification = m.group(1), m.group(2).rstrip(",.")
        negated = re.search(r"\bNOT\b|\bnot\b a plausible", question) is not None
        plausible = self._plausible(command, classification)
        answer = plausible ^ negated
        rationale = (
            f"The command {'shows' if plausible else 'lacks'} the indicators of "
            f"{classification}."
        )
        return answer, rationale


@dataclass
class HttpBackend:
    """Generic chat-completion endpoint: POST {url} with a JSON body
    {model, messages:[{role:'user', content}]}; the reply text is read from
    choices[0].message.content. The bearer token comes from an environment
    variable so credentials stay out of config files."""

    url: str
    model: str
    auth_env: str = "CMDSIFT_BACKEND_TOKEN"
    timeout_s: float = 60.0

    def complete(self, prompt: str) -> str:
        body = json.dumps(
            {"model": self.model, "messages": [{"role": "user", "content": prompt}]}
        ).encode("utf-8")
        req = urllib.request.Request(self.url, data=body, method="POST")
        req.add_header("Content-Type", "application/json")
        token = os.environ.get(self.auth_env, "")
        if token:
            req.add_header("Authorization", f"Bearer {token}")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
            return payload["choices"][0]["message"]["content"]
        except Exception as exc:  # urllib raises a small zoo of error types
            raise BackendError(f"backend request failed: {exc}") from exc

    def judge(self, question: str) -> tuple[bool, str]:
        text = self.complete(question).strip()
        first = text.split(None, 1)[0].strip(".,:").lower() if text else ""
        if first not in ("yes", "no"):
            raise BackendError(f"judge reply did not start with YES/NO: {text[:80]!r}")
        return first == "yes", text
