/*
 * Copyright 2026 The scensim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace scensim {

/// Base class for every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text (XML, JSON, CSV) or a document violating its schema.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Attribute values of incompatible tags were combined.
class TagError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

/// A precondition of an operation was violated by its arguments.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

} // namespace scensim
