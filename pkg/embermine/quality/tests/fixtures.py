"""
Shared test fixtures: C snippets and ScriptedRepo, a GitPython repository
builder that records what it committed so tests can compare mined results
against the script.
"""

from dataclasses import dataclass, field
from pathlib import Path

import git

# 2024-03-01 11:00:00 UTC
START = 1709290800
HOUR = 3600


# Violation example: notVolatileVarIrs@1, wrongUseGlobalVar@2, slowIRS@7,
# slowIRS@8, wrongUseOfVolatile@13.
SNIPPET_ONE = """\
int flag = 0;
volatile int cnt = 0;

int GPIO_Handler () {
  flag = 1;
  gpio_put(LED, 1);
  sleep_ms(1);
  printf("Debug gpio irs \\n");
}

void main (void) {
  ... // Initialization
  volatile int status;
  while (1) {
    if (flag == 1) {
      sprintf(str, "cnt: %d", cnt);
      // ...
    }
  }
}
"""

SNIPPET_ONE_CLEAN = """\
volatile int flag = 0;

int GPIO_Handler () {
  flag = 1;
  gpio_put(LED, 1);
}

void main (void) {
  int cnt = 0;
  int status;
  while (1) {
    if (flag == 1) {
      cnt++;
      sprintf(str, "cnt: %d", cnt);
    }
  }
}
"""

TONE = """\
void tone(int freq, int time){
  int periodo = 1000000 / freq;
  int t = freq * time / 1000;
  for(int i; i < t; i++){
    set_buzzer();
    delay_us(periodo/2);
    clear_buzzer();
    delay_us(periodo/2);
  }
}
"""

USART_PUTS = """\
uint32_t usart_puts(uint8_t *pstring) {
  uint32_t i;
  while(*(pstring + i)) {
    usart_putc(*(pstring + i));
    i++;
  }
  return i;
}
"""

MAIN_C = """\
int main(void)
{
    return 0;
}
"""


def handler_source(number: int, slow: bool = True) -> str:
    """An ISR in its own file; with `slow` it carries one slowIRS issue on line 3."""
    body = "    sleep_ms(1);\n" if slow else "    return;\n"
    return f"void T{number}_Handler(void)\n{{\n{body}}}\n"


def cppcheck_xml(*errors: str, version: str = "2.13.0") -> str:
    return (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        '<results version="2">\n'
        f'    <cppcheck version="{version}"/>\n'
        "    <errors>\n" + "\n".join(errors) + "\n    </errors>\n</results>\n"
    )


def cppcheck_error(rule_id: str, path: str, line: int, severity: str = "style", msg: str = "", symbol: str = "") -> str:
    symbol_xml = f"<symbol>{symbol}</symbol>" if symbol else ""
    return (
        f'        <error id="{rule_id}" severity="{severity}" msg="{msg or rule_id}" verbose="{msg or rule_id}">'
        f'<location file="{path}" line="{line}" column="1"/>{symbol_xml}</error>'
    )


@dataclass(frozen=True)
class Author:
    name: str
    email: str

    @property
    def id(self) -> str:
        return self.email.lower()


ALICE = Author("Alice Student", "alice@uni.example")
BOB = Author("Bob Student", "bob@uni.example")
STAFF = Author("Course Staff", "staff@instructor.example")
TEMPLATE_PATTERNS = ("*@instructor.example",)


@dataclass
class ScriptedCommit:
    hash: str
    author: Author
    timestamp: int
    files: dict[str, str | None] = field(default_factory=dict)


class ScriptedRepo:
    """Builds a linear history one commit at a time."""

    def __init__(self, path: Path, start: int = START):
        self.path = Path(path)
        self.repo = git.Repo.init(self.path)
        self.start = start
        self.timestamp = start
        self.commits: list[ScriptedCommit] = []

    def commit(self, author: Author, files: dict[str, str | None], hours: float = 24, message: str = "") -> str:
        if self.commits:
            self.timestamp += int(hours * HOUR)
        index = self.repo.index
        for path, content in files.items():
            if content is None:
                index.remove([path], working_tree=True)
                continue
            target = self.path / path
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(content, encoding="utf-8")
            index.add([path])
        return self._commit(index, author, files, message)

    def rename(self, author: Author, old: str, new: str, content: str | None = None, hours: float = 24) -> str:
        if self.commits:
            self.timestamp += int(hours * HOUR)
        (self.path / new).parent.mkdir(parents=True, exist_ok=True)
        self.repo.git.mv(old, new)
        index = self.repo.index
        if content is not None:
            (self.path / new).write_text(content, encoding="utf-8")
            index.add([new])
        return self._commit(index, author, {old: None, new: content}, f"rename {old} to {new}")

    def _commit(self, index, author: Author, files: dict, message: str) -> str:
        actor = git.Actor(author.name, author.email)
        date = f"{self.timestamp} +0000"
        commit = index.commit(
            message or f"commit {len(self.commits)}",
            author=actor,
            committer=actor,
            author_date=date,
            commit_date=date,
        )
        self.commits.append(ScriptedCommit(commit.hexsha, author, self.timestamp, dict(files)))
        return commit.hexsha

    def timestamp_of(self, index: int) -> int:
        return self.commits[index].timestamp
