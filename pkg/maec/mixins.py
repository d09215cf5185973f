from typing import Any, Dict, Tuple, Union

__all__ = ('MappingLoader',)


class MappingLoader:
    """Provides a _load_attrs() classmethod for extracting constructor
    arguments from a mapping, such as a decoded run manifest.
    Subclasses list the attributes in a private `__init_attrs` tuple.

    """

    @classmethod
    def _load_attrs(
            cls, attrs, mapping: Tuple[Union[str, dict], ...], *,
            required=True) -> Dict[str, Any]:
        """Extract keyword arguments from attrs according to mapping.

        Each attr specified in mapping can be either a string, or a dictionary.
        A single string specifies both the argument's name
        and the key in the attrs dict. A dictionary specifies the argument's
        name as `name`, an optional key or sequence of keys for navigating
        the dictionary as `path`, and an optional `type` for converting
        the value.
        Examples:
            'seed'
                Reads the "seed" key and passes it as `seed`
            {'name': 'seed'}
                Equivalent to above
            {'name': 'lambda_alpha', 'path': 'lambdaAlpha', 'type': float}
                Reads the "lambdaAlpha" key, converts it to a float and
                passes it as `lambda_alpha`
            {'name': 'created_at', 'path': ('run', 'createdAt'),
             'type': utils.parse_datetime}
                Reads the "createdAt" key inside "run", parses it
                and passes it as `created_at`
            {'name': 'nit', 'default': 0}
                Reads the "nit" key and if it exists, converts it,
                otherwise the `default` value is used unconverted.

        A value of None is passed through without conversion.

        Args:
            attrs (dict): A dictionary of attributes to extract values from.
            mapping (Tuple[Union[str, dict], ...]):
                The mapping to follow when extracting attributes from attrs.
            required (bool): If True, all specified attributes that do not
                have a default must exist.
                Otherwise, missing keys are left out of the result so that
                the constructor's own defaults apply.

        Returns:
            Dict[str, Any]: Keyword arguments for the constructor.

        Raises:
            KeyError: An attribute specified in mapping was missing from attrs.

        """
        missing = object()

        def lookup(p):
            v = attrs
            for k in p:
                try:
                    v = v[k]
                except (KeyError, TypeError):
                    raise KeyError(f'attrs is missing {k!r} from {v!r}')
            return v

        kwargs = {}
        for x in mapping:
            if isinstance(x, str):
                x = {'name': x}
            name, path = x['name'], x.get('path')
            if path is None:
                path = name
            if isinstance(path, str):
                path = (path,)

            try:
                val = lookup(path)
            except KeyError as e:
                val = x.get('default', missing)
                if val is missing:
                    if required:
                        raise e
                    continue
                kwargs[name] = val
                continue

            conv = x.get('type')
            if conv is not None and val is not None:
                val = conv(val)
            kwargs[name] = val

        return kwargs
