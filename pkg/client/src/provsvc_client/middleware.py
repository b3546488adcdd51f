"""Generic request-middleware instrumentation.

Wraps a request handler so every handled request emits exactly one capture
envelope, with data items mapped from request/response metadata by caller
supplied functions. The handler's behavior is untouched: same arguments in,
byte-identical response out, exceptions propagated as-is (and nothing
emitted for failed requests).

This is the instrumentation style for services with a stable request path:
decorate the middleware once instead of editing each task implementation.
"""

from __future__ import annotations

import functools
from typing import Callable, Iterable

from .capture import WorkflowSession

ItemSpec = tuple  # (type_label, identity) or (type_label, identity, attributes)


def _record(record_fn, items: Iterable[ItemSpec] | None) -> None:
    for item in items or ():
        if len(item) == 2:
            type_label, identity = item
            record_fn(type_label, identity)
        else:
            type_label, identity, attributes = item
            record_fn(type_label, identity, attributes)


def instrument_handler(session: WorkflowSession, transformation: str,
                       used_from: Callable | None = None,
                       generated_from: Callable | None = None):
    """Decorator producing one envelope per handled request.

    used_from(request) and generated_from(request, response) return iterables
    of (type_label, identity[, attributes]) describing the data items the
    request consumed and produced.
    """

    def decorate(handler: Callable):
        @functools.wraps(handler)
        def wrapped(request):
            capture = session.begin_task(transformation)
            response = handler(request)
            if used_from is not None:
                _record(capture.record_used, used_from(request))
            if generated_from is not None:
                _record(capture.record_generated, generated_from(request, response))
            session.end_task(capture)
            return response

        return wrapped

    return decorate
