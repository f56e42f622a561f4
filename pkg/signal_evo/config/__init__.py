"""Config subpackage for `signal_evo`.

`settings` is imported on demand so that importing the package never
evaluates environment-dependent values. Scenario YAML files live in
`scenarios/`, the default event skill bank in `skill_bank/`.
"""

__all__ = ["settings"]


def __getattr__(name: str):
	if name == "settings":
		from importlib import import_module

		return import_module(__name__ + ".settings")
	raise AttributeError(name)
