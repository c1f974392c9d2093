from enum import Enum
import datetime, sys, os, io
from typing import LiteralString, TextIO

try:
    import colorama # type: ignore
    colorama.init()
except ModuleNotFoundError:
    colorama = None

class log95Levels(Enum):
    DEBUG = 0
    VERBOSE = 1
    INFO = 2
    WARN = 3
    ERROR = 4
    CRITICAL_ERROR = 5

    @classmethod
    def from_name(cls, name: str) -> "log95Levels":
        """Accepts the member name in any case, plus the short aliases WARNING and CRITICAL"""
        key = name.strip().upper()
        match key:
            case "WARNING": key = "WARN"
            case "CRITICAL": key = "CRITICAL_ERROR"
        try: return cls[key]
        except KeyError: raise ValueError(f"unknown log level {name!r}") from None

# Process-wide sink and threshold, set once by the entry point.
_sink: TextIO | io.TextIOWrapper = sys.stderr
_threshold = log95Levels.INFO
if (_env_level := os.environ.get("VRCQ_LOG_LEVEL")):
    try: _threshold = log95Levels.from_name(_env_level)
    except ValueError: pass

def configure(output: TextIO | io.TextIOWrapper | None = None, level: log95Levels | None = None) -> None:
    global _sink, _threshold
    if output is not None: _sink = output
    if level is not None: _threshold = level

def threshold() -> log95Levels: return _threshold

class log95:
    def __init__(self, tag : str="...", level: log95Levels | None = None, output: TextIO | io.TextIOWrapper | None = None) -> None:
        """level and output default to the process-wide values at the time a record is written"""
        self.tag = str(tag)
        self._level = level
        self._output = output
    @property
    def output(self) -> TextIO | io.TextIOWrapper: return self._output if self._output is not None else _sink
    @property
    def level(self) -> int: return (self._level or _threshold).value
    def enabled(self, level: log95Levels) -> bool: return level.value >= self.level
    def log(self, level: log95Levels, *args:str, seperator=" ") -> None:
        if not self.enabled(level): return
        we_have_color = colorama is not None and getattr(self.output, "isatty", lambda: False)()
        def level_to_str(_level: log95Levels, _color: bool) -> LiteralString | str:
            if _color and colorama:
                match _level:
                    case log95Levels.VERBOSE: return f"{colorama.Fore.LIGHTWHITE_EX}VERBOSE{colorama.Fore.RESET}"
                    case log95Levels.CRITICAL_ERROR: return f"{colorama.Fore.RED}CRITICAL{colorama.Fore.RESET}"
                    case log95Levels.ERROR: return f"{colorama.Fore.LIGHTRED_EX}ERROR{colorama.Fore.RESET}"
                    case log95Levels.WARN: return f"{colorama.Fore.YELLOW}WARN{colorama.Fore.RESET}"
                    case log95Levels.INFO: return f"{colorama.Fore.BLUE}INFO{colorama.Fore.RESET}"
                    case _: return _level.name
            else:
                match _level:
                    case log95Levels.CRITICAL_ERROR: return "CRITICAL"
                    case _: return _level.name
        self.output.write(f"[{self.tag}] ({level_to_str(level, we_have_color)}) @ ({datetime.datetime.now().strftime('%d.%m.%Y %H:%M:%S.%f')}) - {seperator.join(str(a) for a in args)}{os.linesep}")
    def debug(self, *args:str, seperator=" ") -> None:
        self.log(log95Levels.DEBUG, *args, seperator=seperator)
    def verbose(self, *args:str, seperator=" ") -> None:
        self.log(log95Levels.VERBOSE, *args, seperator=seperator)
    def critical_error(self, *args:str, seperator=" ") -> None:
        self.log(log95Levels.CRITICAL_ERROR, *args, seperator=seperator)
    def error(self, *args:str, seperator=" ") -> None:
        self.log(log95Levels.ERROR, *args, seperator=seperator)
    def warning(self, *args:str, seperator=" ") -> None:
        self.log(log95Levels.WARN, *args, seperator=seperator)
    def info(self, *args:str, seperator=" ") -> None:
        self.log(log95Levels.INFO, *args, seperator=seperator)
