"""casprepair: ковариационно-осведомлённые операторы ремонта портфелей."""

__version__ = "0.3.0"
